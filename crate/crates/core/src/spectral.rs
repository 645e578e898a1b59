//! 2D discrete Fourier transforms scaled to approximate the continuous
//! transform `f̃(ω) = ∬ f(x, y) e^{-i(ω1 x + ω2 y)} dx dy`, and linear
//! convolution of kernel layers with field layers.
//!
//! Spectra are kept in FFT-natural order: index `k` carries the signed
//! frequency `k` for `k < N/2` and `k - N` otherwise, with
//! `ω_k = 2π k_signed / (N Δ)`. The inverse carries the `1/4π²` factor.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis as NdAxis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid3, ScalarField3};

/// Signed frequency index for FFT-natural position `k` of an `n`-point transform.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT-natural position of signed frequency `s`.
pub fn natural_index(s: i64, n: usize) -> usize {
    s.rem_euclid(n as i64) as usize
}

pub fn angular_frequency(k: usize, n: usize, spacing: f64) -> f64 {
    2.0 * PI * signed_index(k, n) as f64 / (n as f64 * spacing)
}

/// Horizontal sampling shared by every layer of a slab: square, even-sized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub n: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Plane {
    pub fn new(n: usize, dx: f64, dy: f64, x0: f64, y0: f64) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!("transform size must be even and >= 2, got {n}")));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::invalid("transform spacing must be positive"));
        }
        Ok(Self { n, dx, dy, x0, y0 })
    }

    pub fn from_axes(x: &Axis, y: &Axis) -> Result<Self> {
        if x.count() != y.count() {
            return Err(Error::invalid(format!(
                "layers must be square, got {} x {}",
                x.count(),
                y.count()
            )));
        }
        Self::new(x.count(), x.spacing(), y.spacing(), x.origin(), y.origin())
    }

    pub fn from_grid(grid: &Grid3) -> Result<Self> {
        Self::from_axes(&grid.x, &grid.y)
    }

    pub fn omega1(&self, k: usize) -> f64 {
        angular_frequency(k, self.n, self.dx)
    }

    pub fn omega2(&self, k: usize) -> f64 {
        angular_frequency(k, self.n, self.dy)
    }

    pub fn d_omega1(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    pub fn d_omega2(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dy)
    }

    pub fn modes(&self) -> usize {
        self.n * self.n
    }

    /// Flattened mode index, ω1 fastest.
    pub fn mode(&self, k1: usize, k2: usize) -> usize {
        k2 * self.n + k1
    }

    pub fn mode_indices(&self, m: usize) -> (usize, usize) {
        (m % self.n, m / self.n)
    }

    pub fn mode_omegas(&self, m: usize) -> (f64, f64) {
        let (k1, k2) = self.mode_indices(m);
        (self.omega1(k1), self.omega2(k2))
    }

    /// Mode carrying `(-ω1, -ω2)`.
    pub fn conjugate_mode(&self, m: usize) -> usize {
        let (k1, k2) = self.mode_indices(m);
        self.mode((self.n - k1) % self.n, (self.n - k2) % self.n)
    }

    /// Phase `e^{-i(ω1 x0 + ω2 y0)}` that moves the DFT origin to `(x0, y0)`.
    fn shift(&self, k1: usize, k2: usize) -> Complex64 {
        Complex64::from_polar(1.0, -(self.omega1(k1) * self.x0 + self.omega2(k2) * self.y0))
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.n, self.n) {
            return Err(Error::invalid(format!(
                "layer shape {:?} does not match {}x{} plane",
                shape, self.n, self.n
            )));
        }
        Ok(())
    }
}

/// Planned forward and inverse FFTs for `n x n` arrays.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Unnormalized in-place 2D transform.
    pub fn process(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.n, self.n), "Fft2 size mismatch");
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let flat = data.as_slice_mut().expect("standard layout");
        fft.process_with_scratch(flat, &mut scratch);
        let mut column = vec![Complex64::new(0.0, 0.0); self.n];
        for mut col in data.axis_iter_mut(NdAxis(1)) {
            for (c, v) in column.iter_mut().zip(col.iter()) {
                *c = *v;
            }
            fft.process_with_scratch(&mut column, &mut scratch);
            for (v, c) in col.iter_mut().zip(column.iter()) {
                *v = *c;
            }
        }
    }
}

/// Forward transform of one layer, `(ny, nx)` in and FFT-natural spectrum out.
pub fn dft2_forward(layer: ArrayView2<'_, f64>, plane: &Plane) -> Result<Array2<Complex64>> {
    plane.check(layer.dim())?;
    let fft = Fft2::new(plane.n);
    Ok(forward_with(&fft, layer, plane))
}

pub(crate) fn forward_with(fft: &Fft2, layer: ArrayView2<'_, f64>, plane: &Plane) -> Array2<Complex64> {
    let mut data = layer.mapv(|v| Complex64::new(v, 0.0));
    fft.process(&mut data, false);
    let area = plane.dx * plane.dy;
    for ((k2, k1), v) in data.indexed_iter_mut() {
        *v *= plane.shift(k1, k2) * area;
    }
    data
}

/// Inverse transform back to a real layer. The spectrum must be
/// conjugate-symmetric to within `1e-9` of its largest coefficient.
pub fn dft2_inverse(spectrum: &Array2<Complex64>, plane: &Plane) -> Result<Array2<f64>> {
    plane.check(spectrum.dim())?;
    let fft = Fft2::new(plane.n);
    inverse_with(&fft, spectrum, plane)
}

pub(crate) fn inverse_with(fft: &Fft2, spectrum: &Array2<Complex64>, plane: &Plane) -> Result<Array2<f64>> {
    let n = plane.n;
    let mut data = spectrum.clone();
    for ((k2, k1), v) in data.indexed_iter_mut() {
        *v *= plane.shift(k1, k2).conj();
    }
    let scale = data.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if scale > 0.0 {
        let mut defect = 0.0f64;
        for ((k2, k1), v) in data.indexed_iter() {
            let mirror = data[[(n - k2) % n, (n - k1) % n]];
            defect = defect.max((v - mirror.conj()).norm());
        }
        let defect = defect / scale;
        if defect > 1e-9 {
            return Err(Error::Symmetry { defect });
        }
    }
    fft.process(&mut data, true);
    let norm = 1.0 / (n as f64 * n as f64 * plane.dx * plane.dy);
    Ok(data.mapv(|v| v.re * norm))
}

/// Linear (non-circular) convolution
/// `out(x) = Σ_{x'} K(x - x') f(x') Δx Δy` for `x, x'` on the field's `N x N` grid.
///
/// `kernel` holds `K` on the offsets `(q - N) Δ`, `q = 0..2N`, i.e. `[-2r, 2r)`.
pub fn convolve2(kernel: ArrayView2<'_, f64>, field: ArrayView2<'_, f64>, dx: f64, dy: f64) -> Result<Array2<f64>> {
    let (ny, nx) = field.dim();
    if ny != nx || kernel.dim() != (2 * nx, 2 * nx) {
        return Err(Error::invalid(format!(
            "convolve2 needs an N x N field and a 2N x 2N kernel, got {:?} and {:?}",
            field.dim(),
            kernel.dim()
        )));
    }
    let fft = Fft2::new(2 * nx);
    let k = padded_kernel_spectrum(&fft, kernel, dx * dy);
    let f = padded_field_spectrum(&fft, field);
    let prod = &k * &f;
    Ok(extract_padded(&fft, prod, nx))
}

/// Spectrum of a centered `2N x 2N` kernel layer, weighted by the cell area.
pub(crate) fn padded_kernel_spectrum(fft: &Fft2, kernel: ArrayView2<'_, f64>, area: f64) -> Array2<Complex64> {
    let p = fft.size();
    let half = p / 2;
    let mut data = Array2::zeros((p, p));
    for ((qy, qx), v) in kernel.indexed_iter() {
        data[[(qy + half) % p, (qx + half) % p]] = Complex64::new(v * area, 0.0);
    }
    fft.process(&mut data, false);
    data
}

pub(crate) fn padded_field_spectrum(fft: &Fft2, field: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let p = fft.size();
    let mut data = Array2::zeros((p, p));
    for ((j, i), v) in field.indexed_iter() {
        data[[j, i]] = Complex64::new(*v, 0.0);
    }
    fft.process(&mut data, false);
    data
}

/// Inverse of a padded product spectrum restricted to the leading `n x n` block.
pub(crate) fn extract_padded(fft: &Fft2, mut spectrum: Array2<Complex64>, n: usize) -> Array2<f64> {
    let p = fft.size();
    fft.process(&mut spectrum, true);
    let norm = 1.0 / (p as f64 * p as f64);
    Array2::from_shape_fn((n, n), |(j, i)| spectrum[[j, i]].re * norm)
}

/// Complex 2D spectra of every layer of a slab, `(z, k2, k1)`-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStack {
    plane: Plane,
    z: Axis,
    values: Array3<Complex64>,
}

impl SpectralStack {
    pub fn zeros(plane: Plane, z: Axis) -> Self {
        Self { plane, z, values: Array3::zeros((z.count(), plane.n, plane.n)) }
    }

    pub fn from_layers(plane: Plane, z: Axis, values: Array3<Complex64>) -> Result<Self> {
        if values.dim() != (z.count(), plane.n, plane.n) {
            return Err(Error::invalid("spectral stack shape does not match its axes"));
        }
        Ok(Self { plane, z, values })
    }

    /// Forward transform of every layer of `field`.
    pub fn forward(field: &ScalarField3) -> Result<Self> {
        let plane = Plane::from_grid(field.grid())?;
        let fft = Fft2::new(plane.n);
        let z = field.grid().z;
        let mut values = Array3::zeros((z.count(), plane.n, plane.n));
        for (k, mut out) in values.axis_iter_mut(NdAxis(0)).enumerate() {
            out.assign(&forward_with(&fft, field.layer(k)?, &plane));
        }
        Ok(Self { plane, z, values })
    }

    /// Inverse transform of every layer onto `grid` (whose horizontal axes
    /// must produce this stack's plane).
    pub fn inverse(&self, grid: &Grid3) -> Result<ScalarField3> {
        if Plane::from_grid(grid)? != self.plane || !grid.z.matches(&self.z) {
            return Err(Error::invalid("grid does not match spectral stack"));
        }
        let fft = Fft2::new(self.plane.n);
        let mut out = Array3::zeros(grid.shape());
        for (k, mut layer) in out.axis_iter_mut(NdAxis(0)).enumerate() {
            let spec = self.values.index_axis(NdAxis(0), k).to_owned();
            layer.assign(&inverse_with(&fft, &spec, &self.plane)?);
        }
        ScalarField3::from_array(*grid, out)
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn z(&self) -> &Axis {
        &self.z
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.values
    }

    pub fn layer(&self, j: usize) -> ArrayView2<'_, Complex64> {
        self.values.index_axis(NdAxis(0), j)
    }

    /// Value at flattened mode `m` and layer `j`.
    pub fn value(&self, m: usize, j: usize) -> Complex64 {
        let (k1, k2) = self.plane.mode_indices(m);
        self.values[[j, k2, k1]]
    }

    pub fn set(&mut self, m: usize, j: usize, v: Complex64) {
        let (k1, k2) = self.plane.mode_indices(m);
        self.values[[j, k2, k1]] = v;
    }

    /// Column of all layers at mode `m`.
    pub fn mode_column(&self, m: usize) -> Vec<Complex64> {
        (0..self.z.count()).map(|j| self.value(m, j)).collect()
    }
}

/// `Σ |f|² Δx Δy` over one layer.
pub fn spatial_energy(layer: ArrayView2<'_, f64>, plane: &Plane) -> f64 {
    layer.iter().map(|v| v * v).sum::<f64>() * plane.dx * plane.dy
}

/// `(1/4π²) Σ |f̃|² Δω1 Δω2` over one spectrum.
pub fn spectral_energy(spectrum: ArrayView2<'_, Complex64>, plane: &Plane) -> f64 {
    spectrum.iter().map(|v| v.norm_sqr()).sum::<f64>() * plane.d_omega1() * plane.d_omega2()
        / (4.0 * PI * PI)
}
