//! The layered integral operator
//! `U(x, y, z_i) = Σ_j ν_j ∬ K(x - x', y - y', z_i - z'_j) f(x', y', z'_j) dx' dy'`
//! and assembly of its right-hand side from observed data.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis as NdAxis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid3, ScalarField3};
use crate::kernel::{source_dz_sum, v0_field, KernelKind, SourceSet};
use crate::spectral::{
    extract_padded, padded_field_spectrum, padded_kernel_spectrum, signed_index, Fft2, Plane,
};

/// How horizontal convolutions treat the edge of the `[-r, r)^2` box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Zero-padded to `2N`: the exact discrete linear convolution.
    Linear,
    /// Circular on the `N x N` box: diagonal in the box's DFT basis, which
    /// is the discretization the per-frequency systems describe exactly.
    Periodic,
}

/// Trapezoidal weights of a closed axis; they sum to its length.
pub fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    let n = axis.count();
    let h = axis.spacing();
    (0..n).map(|j| if j == 0 || j + 1 == n { 0.5 * h } else { h }).collect()
}

/// Kernel samples on the centered `2N x 2N` offset grid `[-2r, 2r)`.
pub fn kernel_layer_linear(kind: KernelKind, plane: &Plane, dz: f64) -> Result<Array2<f64>> {
    let p = 2 * plane.n;
    let n = plane.n as f64;
    let mut out = Array2::zeros((p, p));
    for ((qy, qx), v) in out.indexed_iter_mut() {
        *v = kind.eval((qx as f64 - n) * plane.dx, (qy as f64 - n) * plane.dy, dz)?;
    }
    Ok(out)
}

/// Kernel samples on the `N x N` periodic offset grid in FFT-natural order.
pub fn kernel_layer_periodic(kind: KernelKind, plane: &Plane, dz: f64) -> Result<Array2<f64>> {
    let n = plane.n;
    let mut out = Array2::zeros((n, n));
    for ((qy, qx), v) in out.indexed_iter_mut() {
        let ox = signed_index(qx, n) as f64 * plane.dx;
        let oy = signed_index(qy, n) as f64 * plane.dy;
        *v = kind.eval(ox, oy, dz)?;
    }
    Ok(out)
}

/// Periodic kernel spectrum `K̃(ω1, ω2, dz)` (area-weighted DFT, no phase).
pub fn periodic_kernel_spectrum(kind: KernelKind, plane: &Plane, dz: f64) -> Result<Array2<Complex64>> {
    let fft = Fft2::new(plane.n);
    periodic_kernel_spectrum_with(&fft, kind, plane, dz)
}

fn periodic_kernel_spectrum_with(fft: &Fft2, kind: KernelKind, plane: &Plane, dz: f64) -> Result<Array2<Complex64>> {
    let area = plane.dx * plane.dy;
    let mut data = kernel_layer_periodic(kind, plane, dz)?.mapv(|v| Complex64::new(v * area, 0.0));
    fft.process(&mut data, false);
    // both kernels are even in x and y, so the spectrum is real; drop the roundoff
    data.mapv_inplace(|v| Complex64::new(v.re, 0.0));
    Ok(data)
}

fn offset_key(dz: f64) -> i64 {
    (dz * 1e9).round() as i64
}

/// Periodic kernel spectra for every distinct offset `z_i - z'_j` of an
/// operator, plus the quadrature weights: everything needed to build the
/// per-mode matrices.
#[derive(Debug, Clone)]
pub struct KernelSpectra {
    plane: Plane,
    offsets: Vec<f64>,
    spectra: Vec<Array2<Complex64>>,
    pair: Array2<usize>,
    weights: Vec<f64>,
}

impl KernelSpectra {
    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> usize {
        self.pair.dim().0
    }

    pub fn sources(&self) -> usize {
        self.pair.dim().1
    }

    pub fn distinct_offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `K̃(ω^m, z_i - z'_j)`.
    pub fn value(&self, m: usize, i: usize, j: usize) -> Complex64 {
        let (k1, k2) = self.plane.mode_indices(m);
        self.spectra[self.pair[[i, j]]][[k2, k1]]
    }
}

/// A layered convolution operator from a set of source layers onto the
/// layers of a target z-axis, sharing one horizontal plane.
#[derive(Debug, Clone)]
pub struct LayeredOperator {
    kind: KernelKind,
    plane: Plane,
    boundary: Boundary,
    source_z: Vec<f64>,
    weights: Vec<f64>,
    target: Axis,
}

impl LayeredOperator {
    pub fn new(
        kind: KernelKind,
        plane: Plane,
        boundary: Boundary,
        source_z: Vec<f64>,
        weights: Vec<f64>,
        target: Axis,
    ) -> Result<Self> {
        if source_z.len() != weights.len() || source_z.is_empty() {
            return Err(Error::invalid("source layers and weights must be nonempty and equal in length"));
        }
        let (tlo, thi) = (target.origin(), target.last());
        if let Some(z) = source_z.iter().find(|&&z| (tlo..=thi).contains(&z)) {
            return Err(Error::Singularity(format!("source layer z = {z} lies inside target z-range [{tlo}, {thi}]")));
        }
        Ok(Self { kind, plane, boundary, source_z, weights, target })
    }

    /// Operator between two slabs with trapezoidal weights over the source z-axis.
    pub fn between(kind: KernelKind, source: &Grid3, target: &Grid3, boundary: Boundary) -> Result<Self> {
        if !source.same_horizontal(target) {
            return Err(Error::invalid("source and target slabs must share their x/y axes"));
        }
        let plane = Plane::from_grid(source)?;
        let source_z = source.z.coordinates().collect();
        Self::new(kind, plane, boundary, source_z, trapezoid_weights(&source.z), target.z)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source_z(&self) -> &[f64] {
        &self.source_z
    }

    pub fn target(&self) -> &Axis {
        &self.target
    }

    fn offset(&self, i: usize, j: usize) -> f64 {
        self.target.coordinate(i) - self.source_z[j]
    }

    /// Distinct offsets and the `(target, source) -> offset id` table.
    fn offset_table(&self) -> (Vec<f64>, Array2<usize>) {
        let mut ids: HashMap<i64, usize> = HashMap::new();
        let mut offsets = Vec::new();
        let mut pair = Array2::zeros((self.target.count(), self.source_z.len()));
        for i in 0..self.target.count() {
            for j in 0..self.source_z.len() {
                let dz = self.offset(i, j);
                let id = *ids.entry(offset_key(dz)).or_insert_with(|| {
                    offsets.push(dz);
                    offsets.len() - 1
                });
                pair[[i, j]] = id;
            }
        }
        (offsets, pair)
    }

    /// Periodic kernel spectra of every distinct offset, computed in parallel.
    pub fn kernel_spectra(&self) -> Result<KernelSpectra> {
        let (offsets, pair) = self.offset_table();
        let fft = Fft2::new(self.plane.n);
        let spectra = offsets
            .par_iter()
            .map(|&dz| periodic_kernel_spectrum_with(&fft, self.kind, &self.plane, dz))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelSpectra { plane: self.plane, offsets, spectra, pair, weights: self.weights.clone() })
    }

    /// Applies the operator to source layers given in `source_z` order.
    pub fn apply_layers(&self, layers: &[ArrayView2<'_, f64>]) -> Result<Array3<f64>> {
        if layers.len() != self.source_z.len() {
            return Err(Error::invalid(format!(
                "expected {} source layers, got {}",
                self.source_z.len(),
                layers.len()
            )));
        }
        let n = self.plane.n;
        if let Some(l) = layers.iter().find(|l| l.dim() != (n, n)) {
            return Err(Error::invalid(format!("source layer shape {:?} is not {n}x{n}", l.dim())));
        }
        match self.boundary {
            Boundary::Linear => self.apply_linear(layers),
            Boundary::Periodic => self.apply_periodic(layers),
        }
    }

    fn apply_linear(&self, layers: &[ArrayView2<'_, f64>]) -> Result<Array3<f64>> {
        let n = self.plane.n;
        let fft = Fft2::new(2 * n);
        let area = self.plane.dx * self.plane.dy;
        let field_spectra: Vec<_> = layers.par_iter().map(|l| padded_field_spectrum(&fft, *l)).collect();
        // kernels are cached per distinct offset within one target layer only;
        // across layers the offset set can be large (M x M_Π) and 2N-sized.
        let out: Vec<Array2<f64>> = (0..self.target.count())
            .into_par_iter()
            .map(|i| {
                let mut acc = Array2::<Complex64>::zeros((2 * n, 2 * n));
                for (j, fs) in field_spectra.iter().enumerate() {
                    let kernel = kernel_layer_linear(self.kind, &self.plane, self.offset(i, j))?;
                    let ks = padded_kernel_spectrum(&fft, kernel.view(), area);
                    let w = self.weights[j];
                    ndarray::Zip::from(&mut acc).and(&ks).and(fs).for_each(|a, &k, &f| *a += k * f * w);
                }
                Ok(extract_padded(&fft, acc, n))
            })
            .collect::<Result<_>>()?;
        Ok(stack(out, n))
    }

    fn apply_periodic(&self, layers: &[ArrayView2<'_, f64>]) -> Result<Array3<f64>> {
        let n = self.plane.n;
        let fft = Fft2::new(n);
        let spectra = self.kernel_spectra()?;
        let field_spectra: Vec<Array2<Complex64>> = layers
            .par_iter()
            .map(|l| {
                let mut d = l.mapv(|v| Complex64::new(v, 0.0));
                fft.process(&mut d, false);
                d
            })
            .collect();
        let norm = 1.0 / (n as f64 * n as f64);
        let out: Vec<Array2<f64>> = (0..self.target.count())
            .into_par_iter()
            .map(|i| {
                let mut acc = Array2::<Complex64>::zeros((n, n));
                for (j, fs) in field_spectra.iter().enumerate() {
                    let ks = &spectra.spectra[spectra.pair[[i, j]]];
                    let w = self.weights[j];
                    ndarray::Zip::from(&mut acc).and(ks).and(fs).for_each(|a, &k, &f| *a += k * f * w);
                }
                fft.process(&mut acc, true);
                acc.mapv(|v| v.re * norm)
            })
            .collect();
        Ok(stack(out, n))
    }

    /// `apply_layered`: `f` lives on a slab whose z-nodes are this operator's
    /// source layers; the result lives on `target` (same x/y axes, this
    /// operator's target z-axis).
    pub fn apply(&self, f: &ScalarField3, target: &Grid3) -> Result<ScalarField3> {
        let g = f.grid();
        if Plane::from_grid(g)? != self.plane || !g.same_horizontal(target) {
            return Err(Error::invalid("field grid does not match the operator's horizontal plane"));
        }
        if !target.z.matches(&self.target) {
            return Err(Error::invalid("target grid z-axis does not match the operator"));
        }
        let zs: Vec<f64> = g.z.coordinates().collect();
        if zs.len() != self.source_z.len()
            || zs.iter().zip(&self.source_z).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
        {
            return Err(Error::invalid("field z-nodes do not match the operator's source layers"));
        }
        let layers: Vec<_> = f.values().axis_iter(NdAxis(0)).collect();
        let values = self.apply_layers(&layers)?;
        ScalarField3::from_array(*target, values)
    }
}

fn stack(layers: Vec<Array2<f64>>, n: usize) -> Array3<f64> {
    let mut out = Array3::zeros((layers.len(), n, n));
    for (mut dst, src) in out.axis_iter_mut(NdAxis(0)).zip(layers) {
        dst.assign(&src);
    }
    out
}

/// The truncated integration box `Π` used for the `V0` term: `[-r, r)^2`
/// horizontally, and in z the interval `[-r, r]` with bands of half-width
/// `margin` removed around the observation slab and every source plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PiBox {
    pieces: Vec<Axis>,
}

impl PiBox {
    pub fn new(pieces: Vec<Axis>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("integration box needs at least one z-piece"));
        }
        Ok(Self { pieces })
    }

    /// Builds the default box, distributing `layers` z-nodes over the pieces
    /// in proportion to their length (at least two per piece).
    pub fn around(r: f64, observe: &Axis, sources: &SourceSet, margin: f64, layers: usize) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::invalid(format!("integration box margin must be positive, got {margin}")));
        }
        let mut cuts = vec![(observe.origin() - margin, observe.last() + margin)];
        cuts.extend(sources.positions.iter().map(|p| (p[2] - margin, p[2] + margin)));
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pieces = Vec::new();
        let mut lo = -r;
        for (a, b) in cuts {
            if a > lo {
                pieces.push((lo, a.min(r)));
            }
            lo = lo.max(b);
            if lo >= r {
                break;
            }
        }
        if lo < r {
            pieces.push((lo, r));
        }
        pieces.retain(|(a, b)| b > a);
        let total: f64 = pieces.iter().map(|(a, b)| b - a).sum();
        if pieces.is_empty() || total <= 0.0 {
            return Err(Error::invalid("integration box is empty after removing excluded bands"));
        }
        let axes = pieces
            .into_iter()
            .map(|(a, b)| {
                let count = ((layers as f64 * (b - a) / total).round() as usize).max(2);
                Axis::closed(a, b, count)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn pieces(&self) -> &[Axis] {
        &self.pieces
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        self.pieces.iter().flat_map(|a| a.coordinates().collect::<Vec<_>>()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.pieces.iter().flat_map(trapezoid_weights).collect()
    }

    pub fn layer_count(&self) -> usize {
        self.pieces.iter().map(Axis::count).sum()
    }
}

/// Terms of the right-hand side that do not depend on the data:
/// `(A2/2) Σ_l ∂z(1/|x - x_l|) + (1/c0²) ∫_Π ∂z(1/|x - x'|) V0(x') dx'` on the
/// observation slab.
#[derive(Debug, Clone)]
pub struct KnownTerms {
    pub source_term: ScalarField3,
    pub volume_term: ScalarField3,
    pub c0: f64,
    pub a2: f64,
}

impl KnownTerms {
    pub fn compute(sources: &SourceSet, pi: &PiBox, observe: &Grid3, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::invalid(format!("c0 must be positive, got {c0}")));
        }
        let source_term = source_dz_sum(sources, observe)?;
        let volume_term = volume_term(sources, pi, observe)?;
        Ok(Self { source_term, volume_term, c0, a2: sources.a2 })
    }

    /// `(A2/2) S + T / c0²`.
    pub fn combined(&self) -> Result<ScalarField3> {
        self.source_term
            .scaled(0.5 * self.a2)
            .add_scaled(1.0 / (self.c0 * self.c0), &self.volume_term)
    }
}

/// `∫_Π ∂z(1/|x - x'|) V0(x') dx'` at every node of `observe`, with linear
/// horizontal convolution and trapezoidal quadrature over each Π z-piece.
pub fn volume_term(sources: &SourceSet, pi: &PiBox, observe: &Grid3) -> Result<ScalarField3> {
    let plane = Plane::from_grid(observe)?;
    let mut layers = Vec::with_capacity(pi.layer_count());
    for piece in pi.pieces() {
        let g = observe.with_z(*piece);
        let v0 = v0_field(sources, &g)?;
        layers.extend(v0.into_values().axis_iter(NdAxis(0)).map(|l| l.to_owned()));
    }
    let op = LayeredOperator::new(
        KernelKind::DzPotential,
        plane,
        Boundary::Linear,
        pi.z_nodes(),
        pi.weights(),
        observe.z,
    )?;
    let views: Vec<_> = layers.iter().map(|l| l.view()).collect();
    ScalarField3::from_array(*observe, op.apply_layers(&views)?)
}

/// Which right-hand side to build from the observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsMode {
    #[default]
    Full,
    Background,
}

impl std::str::FromStr for RhsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RhsMode::Full),
            "background" => Ok(RhsMode::Background),
            other => Err(Error::invalid(format!("unknown rhs mode '{other}' (full|background)"))),
        }
    }
}

/// `U = 2π data + (A2/2) S + T / c0²`.
pub fn assemble_rhs_full(data: &ScalarField3, known: &KnownTerms) -> Result<ScalarField3> {
    data.scaled(2.0 * PI).add_scaled(1.0, &known.combined()?)
}

/// `U = 2π (data - background)`.
pub fn assemble_rhs_background(data: &ScalarField3, background: &ScalarField3) -> Result<ScalarField3> {
    Ok(data.add_scaled(-1.0, background)?.scaled(2.0 * PI))
}

/// Synthetic observations `∂V2/∂z = (A ζ - (A2/2) S - T / c0²) / 2π`, the
/// algebraic inverse of [`assemble_rhs_full`] for the given operator.
pub fn forward_data(
    zeta: &ScalarField3,
    op: &LayeredOperator,
    known: &KnownTerms,
) -> Result<ScalarField3> {
    let observe = known.source_term.grid();
    let a_zeta = op.apply(zeta, observe)?;
    Ok(a_zeta.add_scaled(-1.0, &known.combined()?)?.scaled(0.5 / PI))
}
