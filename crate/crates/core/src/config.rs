//! JSON run configuration. Every field has a default; the defaults describe
//! the reference experiment (`configs/reference.json`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{moments, SourceSet, TimeProfile};
use crate::operator::RhsMode;
use crate::regsolve::RegularizerSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Half-width of the horizontal box `[-r, r)^2`.
    pub r: f64,
    /// Horizontal nodes per axis (even).
    pub n: usize,
    /// Scatterer slab `[h, big_h]` with `m` z-layers.
    pub h: f64,
    pub big_h: f64,
    pub m: usize,
    /// Observation slab `[h_y, big_h_y]` with `m_y` z-layers.
    pub h_y: f64,
    pub big_h_y: f64,
    pub m_y: usize,
    /// Half-width of the z-bands excluded from the `V0` integration box.
    pub pi_margin: f64,
    /// Total z-nodes of the `V0` integration box; `0` means `2 m + 1`.
    pub pi_layers: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            r: 10.0,
            n: 128,
            h: 1.0,
            big_h: 2.0,
            m: 51,
            h_y: 6.0,
            big_h_y: 7.0,
            m_y: 51,
            pi_margin: 0.5,
            pi_layers: 0,
        }
    }
}

impl Geometry {
    pub fn pi_layer_count(&self) -> usize {
        if self.pi_layers == 0 {
            2 * self.m + 1
        } else {
            self.pi_layers
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub positions: Vec<[f64; 3]>,
    pub profile: TimeProfile,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { positions: plus_positions(8.0, &[3.0, 5.0]), profile: TimeProfile::default() }
    }
}

fn plus_positions(radius: f64, planes: &[f64]) -> Vec<[f64; 3]> {
    planes
        .iter()
        .flat_map(|&z| [[0.0, 0.0, z], [-radius, 0.0, z], [radius, 0.0, z], [0.0, -radius, z], [0.0, radius, z]])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Half-width of the uniform perturbation added to each right-hand-side node.
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub sources: SourceConfig,
    pub c0: f64,
    pub regularizer: RegularizerSpec,
    pub noise: NoiseSpec,
    pub rhs_mode: RhsMode,
    pub output: PathBuf,
    pub independent_discretization: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            sources: SourceConfig::default(),
            c0: 0.5,
            regularizer: RegularizerSpec::default(),
            noise: NoiseSpec::default(),
            rhs_mode: RhsMode::Full,
            output: PathBuf::from("out"),
            independent_discretization: false,
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn source_set(&self) -> Result<SourceSet> {
        SourceSet::new(self.sources.positions.clone(), &self.sources.profile)
    }

    /// Checks everything that can be checked without building grids.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        for (name, v) in [
            ("geometry.r", g.r),
            ("geometry.h", g.h),
            ("geometry.big_h", g.big_h),
            ("geometry.h_y", g.h_y),
            ("geometry.big_h_y", g.big_h_y),
            ("geometry.pi_margin", g.pi_margin),
            ("c0", self.c0),
        ] {
            if !v.is_finite() {
                return Err(field_error(name, format!("must be finite, got {v}")));
            }
        }
        if !(g.r > 0.0) {
            return Err(field_error("geometry.r", format!("must be positive, got {}", g.r)));
        }
        if g.n < 2 || !g.n.is_multiple_of(2) {
            return Err(field_error("geometry.n", format!("must be even and >= 2, got {}", g.n)));
        }
        for (name, v) in [("geometry.m", g.m), ("geometry.m_y", g.m_y)] {
            if v < 2 {
                return Err(field_error(name, format!("must be >= 2, got {v}")));
            }
        }
        if g.pi_layers == 1 {
            return Err(field_error("geometry.pi_layers", "must be 0 (automatic) or >= 2"));
        }
        if !(g.big_h > g.h) {
            return Err(field_error("geometry.big_h", format!("must exceed h = {}", g.h)));
        }
        if !(g.big_h_y > g.h_y) {
            return Err(field_error("geometry.big_h_y", format!("must exceed h_y = {}", g.h_y)));
        }
        if !(g.big_h < g.h_y || g.big_h_y < g.h) {
            return Err(field_error(
                "geometry",
                format!("slabs [{}, {}] and [{}, {}] overlap", g.h, g.big_h, g.h_y, g.big_h_y),
            ));
        }
        if !(g.pi_margin > 0.0) {
            return Err(field_error("geometry.pi_margin", format!("must be positive, got {}", g.pi_margin)));
        }
        if !(self.c0 > 0.0) {
            return Err(field_error("c0", format!("must be positive, got {}", self.c0)));
        }
        moments(&self.sources.profile).map_err(|e| field_error("sources.profile", e))?;
        for (l, p) in self.sources.positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(field_error(&format!("sources.positions[{l}]"), "not finite"));
            }
            for (slab, lo, hi) in [("scatterer", g.h, g.big_h), ("observation", g.h_y, g.big_h_y)] {
                if (lo..=hi).contains(&p[2]) {
                    return Err(field_error(
                        &format!("sources.positions[{l}]"),
                        format!("z = {} lies inside the {slab} slab [{lo}, {hi}]", p[2]),
                    ));
                }
            }
        }
        self.regularizer.validate().map_err(|e| field_error("regularizer", e))?;
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            return Err(field_error("noise.level", format!("must be finite and >= 0, got {}", self.noise.level)));
        }
        Ok(())
    }
}
