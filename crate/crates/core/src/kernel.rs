//! Newtonian potential kernels, delta-shaped sources and the time moments of
//! the source signature.

use std::f64::consts::PI;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField3};

/// `1 / |(dx, dy, dz)|`.
pub fn potential(dx: f64, dy: f64, dz: f64) -> Result<f64> {
    let r2 = dx * dx + dy * dy + dz * dz;
    if r2 == 0.0 {
        return Err(Error::Singularity("potential evaluated at zero offset".into()));
    }
    Ok(1.0 / r2.sqrt())
}

/// `d/dz (1/|x|) = -dz / |x|^3`, the kernel of the layered operator.
pub fn dz_potential(dx: f64, dy: f64, dz: f64) -> Result<f64> {
    let r2 = dx * dx + dy * dy + dz * dz;
    if r2 == 0.0 {
        return Err(Error::Singularity("dz_potential evaluated at zero offset".into()));
    }
    Ok(-dz / (r2 * r2.sqrt()))
}

/// Kernel used by a layered operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    DzPotential,
    Potential,
}

impl KernelKind {
    pub fn eval(self, dx: f64, dy: f64, dz: f64) -> Result<f64> {
        match self {
            KernelKind::DzPotential => dz_potential(dx, dy, dz),
            KernelKind::Potential => potential(dx, dy, dz),
        }
    }
}

/// Time signature g(t) of the sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeProfile {
    /// g(t) = exp(-rate * t)
    ExpDecay { rate: f64 },
    /// Samples `(t, g)` with strictly increasing t starting at 0; integrated
    /// with the trapezoidal rule.
    Tabulated { table: Vec<(f64, f64)> },
}

impl Default for TimeProfile {
    fn default() -> Self {
        TimeProfile::ExpDecay { rate: 1.0 }
    }
}

/// `A0 = ∫ g dt` and `A2 = ∫ t² g dt` over `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub a0: f64,
    pub a2: f64,
}

pub fn moments(profile: &TimeProfile) -> Result<Moments> {
    let m = match profile {
        TimeProfile::ExpDecay { rate } => {
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(Error::Moment(format!("exp-decay rate must be positive, got {rate}")));
            }
            Moments { a0: 1.0 / rate, a2: 2.0 / rate.powi(3) }
        }
        TimeProfile::Tabulated { table } => tabulated_moments(table)?,
    };
    if m.a0 == 0.0 {
        return Err(Error::Moment("A0 = 0: the source signature must have nonzero mean".into()));
    }
    Ok(m)
}

fn tabulated_moments(table: &[(f64, f64)]) -> Result<Moments> {
    if table.len() < 2 {
        return Err(Error::Moment("tabulated profile needs at least two samples".into()));
    }
    if table.iter().any(|(t, g)| !t.is_finite() || !g.is_finite()) {
        return Err(Error::Moment("tabulated profile contains non-finite samples".into()));
    }
    if table[0].0 != 0.0 {
        return Err(Error::Moment("tabulated profile must start at t = 0".into()));
    }
    if table.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Moment("tabulated times must be strictly increasing".into()));
    }
    let peak = table.iter().fold(0.0f64, |m, (_, g)| m.max(g.abs()));
    let (t_end, g_end) = table[table.len() - 1];
    // a table that has not decayed at its end stands for a divergent integral
    if peak > 0.0 && g_end.abs() * t_end.max(1.0).powi(3) > 1e-6 * peak {
        return Err(Error::Moment(format!(
            "tabulated profile has not decayed by t = {t_end} (g = {g_end}); moments diverge"
        )));
    }
    let mut a0 = 0.0;
    let mut a2 = 0.0;
    for w in table.windows(2) {
        let ((t0, g0), (t1, g1)) = (w[0], w[1]);
        let h = t1 - t0;
        a0 += 0.5 * h * (g0 + g1);
        a2 += 0.5 * h * (t0 * t0 * g0 + t1 * t1 * g1);
    }
    Ok(Moments { a0, a2 })
}

/// Delta-shaped point sources with the moments of their common signature.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub positions: Vec<[f64; 3]>,
    pub a0: f64,
    pub a2: f64,
}

impl SourceSet {
    pub fn new(positions: Vec<[f64; 3]>, profile: &TimeProfile) -> Result<Self> {
        let Moments { a0, a2 } = moments(profile)?;
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("source position is not finite"));
        }
        Ok(Self { positions, a0, a2 })
    }

    /// Five sources in a plus pattern of radius `radius` on each plane.
    pub fn plus_layout(radius: f64, planes: &[f64], profile: &TimeProfile) -> Result<Self> {
        let mut positions = Vec::with_capacity(5 * planes.len());
        for &z in planes {
            positions.extend([
                [0.0, 0.0, z],
                [-radius, 0.0, z],
                [radius, 0.0, z],
                [0.0, -radius, z],
                [0.0, radius, z],
            ]);
        }
        Self::new(positions, profile)
    }

    /// Union of two source sets sharing a signature.
    pub fn union(&self, other: &SourceSet) -> SourceSet {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        SourceSet { positions, a0: self.a0, a2: self.a2 }
    }

    /// Smallest distance between any source and any node of `grid`.
    pub fn clearance(&self, grid: &Grid3) -> f64 {
        self.positions
            .iter()
            .map(|p| {
                let node = [grid.x.nearest(p[0]), grid.y.nearest(p[1]), grid.z.nearest(p[2])];
                let q = grid.node(node[0], node[1], node[2]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn source_sum<F>(sources: &SourceSet, grid: &Grid3, term: F) -> Result<Array3<f64>>
where
    F: Fn(f64, f64, f64) -> Result<f64>,
{
    let (nz, ny, nx) = grid.shape();
    let mut out = Array3::zeros((nz, ny, nx));
    for k in 0..nz {
        let z = grid.z.coordinate(k);
        for j in 0..ny {
            let y = grid.y.coordinate(j);
            for i in 0..nx {
                let x = grid.x.coordinate(i);
                let mut acc = 0.0;
                for p in &sources.positions {
                    acc += term(x - p[0], y - p[1], z - p[2]).map_err(|_| {
                        Error::Singularity(format!("source ({}, {}, {}) sits on a grid node", p[0], p[1], p[2]))
                    })?;
                }
                out[[k, j, i]] = acc;
            }
        }
    }
    Ok(out)
}

/// `V0(x) = -(A0 / 4π) Σ_l 1/|x - x_l|`.
pub fn v0_field(sources: &SourceSet, grid: &Grid3) -> Result<ScalarField3> {
    let scale = -sources.a0 / (4.0 * PI);
    let sum = source_sum(sources, grid, potential)?;
    ScalarField3::from_array(*grid, sum * scale)
}

/// `Σ_l d/dz (1/|x - x_l|)` sampled on the grid.
pub fn source_dz_sum(sources: &SourceSet, grid: &Grid3) -> Result<ScalarField3> {
    let sum = source_sum(sources, grid, dz_potential)?;
    ScalarField3::from_array(*grid, sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_axis, Axis};

    #[test]
    fn potential_values() {
        assert_eq!(potential(0.0, 3.0, 4.0).unwrap(), 0.2);
        assert_eq!(potential(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!((potential(2.0, 3.0, 6.0).unwrap() - 1.0 / 7.0).abs() < 1e-16);
        assert!(matches!(potential(0.0, 0.0, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn dz_potential_values() {
        assert_eq!(dz_potential(0.0, 0.0, 1.0).unwrap(), -1.0);
        assert_eq!(dz_potential(0.7, -2.0, 0.0).unwrap(), 0.0);
        assert!((dz_potential(0.0, 3.0, 4.0).unwrap() + 4.0 / 125.0).abs() < 1e-17);
        assert!(dz_potential(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn dz_potential_is_cube_identity_and_finite_difference() {
        for &(x, y, z) in &[(1.0, 1.0, 1.0), (0.3, -2.0, 4.5), (-3.0, 0.1, -0.7)] {
            let p = potential(x, y, z).unwrap();
            let d = dz_potential(x, y, z).unwrap();
            assert!((d + z * p.powi(3)).abs() <= 1e-15 * d.abs().max(1e-300));
        }
        let h = 1e-4;
        let fd = (potential(1.0, 1.0, 1.0 + h).unwrap() - potential(1.0, 1.0, 1.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - dz_potential(1.0, 1.0, 1.0).unwrap()).abs() < 1e-7);
    }

    /// Adaptive Simpson on [0, T] used as an independent check of the moments.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn exp_decay_moments_match_quadrature() {
        for &(rate, a0, a2) in &[(1.0, 1.0, 2.0), (2.0, 0.5, 0.25)] {
            let m = moments(&TimeProfile::ExpDecay { rate }).unwrap();
            assert!((m.a0 - a0).abs() <= 1e-10 * a0);
            assert!((m.a2 - a2).abs() <= 1e-10 * a2);
            let t_end = 80.0 / rate;
            let q0 = adaptive_simpson(&|t| (-rate * t).exp(), 0.0, t_end, 1e-14);
            let q2 = adaptive_simpson(&|t| t * t * (-rate * t).exp(), 0.0, t_end, 1e-14);
            assert!((m.a0 - q0).abs() <= 1e-10 * a0, "{} vs {}", m.a0, q0);
            assert!((m.a2 - q2).abs() <= 1e-10 * a2, "{} vs {}", m.a2, q2);
        }
    }

    #[test]
    fn tabulated_profiles() {
        let zero = TimeProfile::Tabulated { table: vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)] };
        assert!(matches!(moments(&zero), Err(Error::Moment(_))));

        let flat = TimeProfile::Tabulated { table: vec![(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)] };
        assert!(matches!(moments(&flat), Err(Error::Moment(_))));

        let table: Vec<(f64, f64)> = (0..=40_000).map(|i| {
            let t = i as f64 * 1e-3;
            (t, (-t).exp())
        }).collect();
        let m = moments(&TimeProfile::Tabulated { table }).unwrap();
        assert!((m.a0 - 1.0).abs() < 1e-6);
        assert!((m.a2 - 2.0).abs() < 1e-5);
    }

    fn probe_grid(x: f64, y: f64, z: f64) -> Grid3 {
        let ax = |c: f64| Axis::new(c, 0.3, 2).unwrap();
        Grid3::new(ax(x), ax(y), ax(z))
    }

    #[test]
    fn v0_single_and_symmetric_sources() {
        let profile = TimeProfile::ExpDecay { rate: 1.0 };
        let one = SourceSet::new(vec![[0.0, 0.0, 1.0]], &profile).unwrap();
        let g = probe_grid(0.0, 0.0, 0.0);
        let v = v0_field(&one, &g).unwrap();
        assert!((v.at(0, 0, 0) + 1.0 / (4.0 * PI)).abs() < 1e-16);

        let two = SourceSet::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]], &profile).unwrap();
        let v2 = v0_field(&two, &g).unwrap();
        assert!((v2.at(0, 0, 0) - 2.0 * v.at(0, 0, 0)).abs() < 1e-16);

        let on_node = SourceSet::new(vec![[0.0, 0.0, 0.0]], &profile).unwrap();
        assert!(matches!(v0_field(&on_node, &g), Err(Error::Singularity(_))));
    }

    #[test]
    fn reference_layout_matches_direct_summation() {
        let profile = TimeProfile::ExpDecay { rate: 1.0 };
        let s = SourceSet::plus_layout(8.0, &[3.0, 5.0], &profile).unwrap();
        assert_eq!(s.positions.len(), 10);
        let g = probe_grid(0.0, 0.0, 1.5);
        let v = v0_field(&s, &g).unwrap().at(0, 0, 0);
        // independent summation: two on-axis sources plus eight at horizontal radius 8
        let mut direct = 0.0;
        for dz in [1.5f64, 3.5] {
            direct += 1.0 / dz + 4.0 / (64.0 + dz * dz).sqrt();
        }
        direct *= -1.0 / (4.0 * PI);
        assert!((v - direct).abs() <= 1e-14 * direct.abs());

        let gy = probe_grid(0.0, 0.0, 6.5);
        let d = source_dz_sum(&s, &gy).unwrap().at(0, 0, 0);
        let mut direct_d = 0.0;
        for dz in [3.5f64, 1.5] {
            direct_d += -dz / dz.powi(3) + 4.0 * (-dz / (64.0 + dz * dz).powf(1.5));
        }
        assert!((d - direct_d).abs() <= 1e-14 * direct_d.abs());
    }

    #[test]
    fn source_dz_sum_single_terms() {
        let profile = TimeProfile::ExpDecay { rate: 1.0 };
        let below = SourceSet::new(vec![[0.0, 0.0, -2.0]], &profile).unwrap();
        let g = probe_grid(0.0, 0.0, 0.0);
        // node above the source: dz = 2 > 0
        assert!((source_dz_sum(&below, &g).unwrap().at(0, 0, 0) + 2.0 / 8.0).abs() < 1e-16);
        let level = SourceSet::new(vec![[3.0, 0.5, 0.0]], &profile).unwrap();
        assert_eq!(source_dz_sum(&level, &g).unwrap().at(0, 0, 0), 0.0);
    }

    #[test]
    fn v0_negative_and_superposes() {
        let profile = TimeProfile::ExpDecay { rate: 0.5 };
        let s1 = SourceSet::new(vec![[0.3, 0.1, 3.0], [-2.0, 1.0, 4.0]], &profile).unwrap();
        let s2 = SourceSet::new(vec![[1.7, -0.4, 3.5]], &profile).unwrap();
        let xy = make_axis(-2.0, 2.0, 5).unwrap();
        let grid = Grid3::new(xy, xy, make_axis(0.0, 1.0, 3).unwrap());
        let a = v0_field(&s1, &grid).unwrap();
        let b = v0_field(&s2, &grid).unwrap();
        let ab = v0_field(&s1.union(&s2), &grid).unwrap();
        assert!(a.values().iter().all(|&v| v < 0.0));
        let sum = a.add_scaled(1.0, &b).unwrap();
        for (x, y) in ab.values().iter().zip(sum.values().iter()) {
            assert!((x - y).abs() <= 1e-15 * x.abs());
        }
    }
}
