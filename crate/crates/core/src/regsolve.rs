//! Per-frequency linear systems `A^(m) ζ̃^(m) = Ũ^(m)` and their regularized
//! solution by truncated SVD or Tikhonov filtering.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::KernelSpectra;
use crate::spectral::SpectralStack;

/// Leading singular values below this are treated as an empty operator.
pub const UNDERFLOW_GUARD: f64 = 1e-290;

/// One dense complex system for a single frequency mode.
#[derive(Debug, Clone)]
pub struct SlaeProblem {
    pub matrix: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
    pub mode: usize,
    pub omega: (f64, f64),
}

impl SlaeProblem {
    pub fn new(matrix: DMatrix<Complex64>, rhs: DVector<Complex64>) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows but rhs has length {}",
                matrix.nrows(),
                rhs.len()
            )));
        }
        if matrix.iter().chain(rhs.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("system contains non-finite entries"));
        }
        Ok(Self { matrix, rhs, mode: 0, omega: (0.0, 0.0) })
    }

    /// Real matrix and right-hand side.
    pub fn real(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> Result<Self> {
        let matrix = DMatrix::from_row_slice(rows, cols, a).map(|v| Complex64::new(v, 0.0));
        let rhs = DVector::from_column_slice(b).map(|v| Complex64::new(v, 0.0));
        Self::new(matrix, rhs)
    }

    pub fn residual(&self, x: &DVector<Complex64>) -> f64 {
        (&self.matrix * x - &self.rhs).norm()
    }
}

/// `A^(m)[i][j] = ν_j K̃(ω^m, z_i - z'_j)`, `rhs[i] = ṽ(ω^m, z_i)`.
pub fn build_slae(kernel: &KernelSpectra, rhs: &SpectralStack, m: usize) -> Result<SlaeProblem> {
    let (rows, cols) = (kernel.targets(), kernel.sources());
    if rhs.z().count() != rows {
        return Err(Error::invalid(format!(
            "rhs stack has {} layers, kernel expects {rows}",
            rhs.z().count()
        )));
    }
    if rhs.plane() != kernel.plane() {
        return Err(Error::invalid("rhs and kernel spectra are on different planes"));
    }
    if m >= kernel.plane().modes() {
        return Err(Error::Index { index: m, len: kernel.plane().modes() });
    }
    let w = kernel.weights();
    let matrix = DMatrix::from_fn(rows, cols, |i, j| kernel.value(m, i, j) * w[j]);
    let b = DVector::from_fn(rows, |i, _| rhs.value(m, i));
    let mut p = SlaeProblem::new(matrix, b)?;
    p.mode = m;
    p.omega = kernel.plane().mode_omegas(m);
    Ok(p)
}

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<Complex64>,
}

impl Svd {
    pub fn of(matrix: &DMatrix<Complex64>) -> Self {
        if is_real(matrix) {
            let svd = matrix.map(|c| c.re).svd(true, true);
            let lift = |m: DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
            return Self {
                u: lift(svd.u.expect("u requested")),
                singular_values: svd.singular_values.iter().copied().collect(),
                v_t: lift(svd.v_t.expect("v_t requested")),
            };
        }
        let svd = matrix.clone().svd(true, true);
        Self {
            u: svd.u.expect("u requested"),
            singular_values: svd.singular_values.iter().copied().collect(),
            v_t: svd.v_t.expect("v_t requested"),
        }
    }

    pub fn leading(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Coefficients `β_k = u_k* b` and the squared norm of `b` outside range(U).
    fn project(&self, b: &DVector<Complex64>) -> (Vec<Complex64>, f64) {
        let beta = self.u.ad_mul(b);
        // formed explicitly: |b|² - |β|² cancels catastrophically at small residuals
        let outside = (b - &self.u * &beta).norm_squared();
        (beta.iter().copied().collect(), outside)
    }

    /// `Σ_k f_k (β_k / ρ_k) v_k` for filter factors `f_k`.
    fn filtered(&self, beta: &[Complex64], filter: impl Fn(usize, f64) -> f64) -> DVector<Complex64> {
        let cols = self.v_t.ncols();
        let mut x = DVector::zeros(cols);
        for (k, (&rho, b)) in self.singular_values.iter().zip(beta).enumerate() {
            let f = filter(k, rho);
            if f == 0.0 || rho == 0.0 {
                continue;
            }
            let coef = b * (f / rho);
            for c in 0..cols {
                x[c] += self.v_t[(k, c)].conj() * coef;
            }
        }
        x
    }
}

/// Outcome of one regularized solve.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub solution: DVector<Complex64>,
    pub rank: usize,
    pub residual: f64,
    pub singular_values: Vec<f64>,
}

fn finish(p: &SlaeProblem, svd: &Svd, x: DVector<Complex64>, rank: usize) -> ModeSolution {
    ModeSolution {
        residual: p.residual(&x),
        solution: x,
        rank,
        singular_values: svd.singular_values.clone(),
    }
}

fn zero_solution(p: &SlaeProblem, svd: &Svd) -> ModeSolution {
    finish(p, svd, DVector::zeros(p.matrix.ncols()), 0)
}

/// Truncated SVD keeping `ρ_k >= tau ρ_1`.
pub fn tsvd_solve(p: &SlaeProblem, tau: f64) -> Result<ModeSolution> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::invalid(format!("tsvd threshold must lie in [0, 1), got {tau}")));
    }
    let svd = Svd::of(&p.matrix);
    Ok(tsvd_with_cutoff(p, &svd, tau * svd.leading()))
}

/// Truncated SVD keeping every `ρ_k >= cutoff` (absolute).
pub fn tsvd_with_cutoff(p: &SlaeProblem, svd: &Svd, cutoff: f64) -> ModeSolution {
    if svd.leading() < UNDERFLOW_GUARD {
        return zero_solution(p, svd);
    }
    let rank = svd.singular_values.iter().take_while(|&&s| s >= cutoff && s > 0.0).count();
    let (beta, _) = svd.project(&p.rhs);
    let x = svd.filtered(&beta, |k, _| if k < rank { 1.0 } else { 0.0 });
    finish(p, svd, x, rank)
}

/// Truncated SVD with the smallest rank whose residual is within `delta`,
/// never keeping components below `cutoff`.
pub fn tsvd_discrepancy(p: &SlaeProblem, svd: &Svd, delta: f64, cutoff: f64) -> ModeSolution {
    if svd.leading() < UNDERFLOW_GUARD {
        return zero_solution(p, svd);
    }
    let max_rank = svd.singular_values.iter().take_while(|&&s| s >= cutoff && s > 0.0).count();
    let (beta, outside) = svd.project(&p.rhs);
    // tail[k] = squared residual when keeping k components
    let mut tail = vec![outside; beta.len() + 1];
    for k in (0..beta.len()).rev() {
        tail[k] = tail[k + 1] + beta[k].norm_sqr();
    }
    let rank = (0..=max_rank).find(|&k| tail[k] <= delta * delta).unwrap_or(max_rank);
    let x = svd.filtered(&beta, |k, _| if k < rank { 1.0 } else { 0.0 });
    finish(p, svd, x, rank)
}

/// Tikhonov solution `argmin |Ax - b|² + α|x|²` via SVD filter factors.
pub fn tikhonov_solve(p: &SlaeProblem, alpha: f64) -> Result<ModeSolution> {
    let svd = Svd::of(&p.matrix);
    tikhonov_with(p, &svd, alpha, 0.0)
}

/// Tikhonov filtering of the components with `ρ_k >= cutoff`; the rest are dropped.
pub fn tikhonov_with(p: &SlaeProblem, svd: &Svd, alpha: f64, cutoff: f64) -> Result<ModeSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("tikhonov parameter must be positive, got {alpha}")));
    }
    if svd.leading() < UNDERFLOW_GUARD {
        return Ok(zero_solution(p, svd));
    }
    let (beta, _) = svd.project(&p.rhs);
    let x = svd.filtered(&beta, |_, rho| tikhonov_filter(rho, alpha, cutoff));
    let rank = svd.singular_values.iter().filter(|&&s| s * s >= alpha && s >= cutoff).count();
    Ok(finish(p, svd, x, rank))
}

fn tikhonov_filter(rho: f64, alpha: f64, cutoff: f64) -> f64 {
    if rho >= cutoff {
        rho * rho / (rho * rho + alpha)
    } else {
        0.0
    }
}

/// Tikhonov residual norm from the SVD, without forming the solution.
fn tikhonov_residual(svd: &Svd, beta: &[Complex64], outside: f64, alpha: f64, cutoff: f64) -> f64 {
    let inside: f64 = svd
        .singular_values
        .iter()
        .zip(beta)
        .map(|(&rho, b)| {
            let f = 1.0 - tikhonov_filter(rho, alpha, cutoff);
            f * f * b.norm_sqr()
        })
        .sum();
    (inside + outside).sqrt()
}

/// Result of discrepancy-principle parameter selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Alpha(f64),
    /// `|b| <= delta`: the zero solution already meets the discrepancy.
    ZeroSolution,
}

pub const DISCREPANCY_MAX_ITER: usize = 60;
/// Search interval for `α`, in units of `ρ_1²`.
pub const ALPHA_RANGE: (f64, f64) = (1e-18, 1e2);

/// Finds `α` with `δ <= |A x(α) - b| <= 1.1 δ` by bisection on `log α`
/// over `[1e-18, 1e2] ρ_1²`.
pub fn choose_alpha_discrepancy(p: &SlaeProblem, delta: f64) -> Result<AlphaChoice> {
    let svd = Svd::of(&p.matrix);
    choose_alpha_with(p, &svd, delta, 0.0)
}

/// Discrepancy selection for [`tikhonov_with`] at the given cutoff.
pub fn choose_alpha_with(p: &SlaeProblem, svd: &Svd, delta: f64, cutoff: f64) -> Result<AlphaChoice> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("discrepancy level must be positive, got {delta}")));
    }
    if p.rhs.norm() <= delta {
        return Ok(AlphaChoice::ZeroSolution);
    }
    let rho1 = svd.leading();
    if rho1 < UNDERFLOW_GUARD {
        return Err(Error::Selection("operator is numerically zero".into()));
    }
    let (beta, outside) = svd.project(&p.rhs);
    let residual = |log_alpha: f64| tikhonov_residual(svd, &beta, outside, log_alpha.exp(), cutoff);
    let target_hi = 1.1 * delta;
    let mut lo = (ALPHA_RANGE.0 * rho1 * rho1).ln();
    let mut hi = (ALPHA_RANGE.1 * rho1 * rho1).ln();
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo > target_hi {
        return Err(Error::Selection(format!(
            "residual {r_lo:e} at the smallest alpha exceeds 1.1 * delta = {target_hi:e}"
        )));
    }
    if r_lo >= delta {
        return Ok(AlphaChoice::Alpha(lo.exp()));
    }
    if r_hi < delta {
        return Err(Error::Selection(format!(
            "residual {r_hi:e} at the largest alpha stays below delta = {delta:e}"
        )));
    }
    if r_hi <= target_hi {
        return Ok(AlphaChoice::Alpha(hi.exp()));
    }
    for _ in 0..DISCREPANCY_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if (delta..=target_hi).contains(&r) {
            return Ok(AlphaChoice::Alpha(mid.exp()));
        }
        if r < delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    // the bracket collapsed without landing inside the window: take the side
    // whose residual is at least delta
    Ok(AlphaChoice::Alpha(hi.exp()))
}

fn is_real(matrix: &DMatrix<Complex64>) -> bool {
    matrix.iter().all(|c| c.im == 0.0)
}

/// Descending singular values, `min(M, M')` of them.
pub fn singular_spectrum(p: &SlaeProblem) -> Vec<f64> {
    let values = if is_real(&p.matrix) {
        p.matrix.map(|c| c.re).singular_values()
    } else {
        p.matrix.clone().singular_values()
    };
    let mut s: Vec<f64> = values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Tsvd,
    Tikhonov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    Fixed,
    Discrepancy,
}

/// What the TSVD threshold `tau` is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScale {
    /// `tau` times the leading singular value of each mode.
    #[default]
    Mode,
    /// `tau` times the largest singular value over all modes of the operator.
    Operator,
    /// `tau` is an absolute singular-value level.
    Absolute,
}

/// Regularization settings for the per-mode solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizerSpec {
    pub method: Method,
    pub tau: f64,
    pub threshold: ThresholdScale,
    pub alpha: f64,
    /// Noise level per node of the right-hand side, used by discrepancy selection.
    pub delta: f64,
    /// Singular values below `floor` times the largest one over all modes
    /// are treated as zero whatever the threshold scale. `None` uses the
    /// numerical-rank level `max(M, M') ε`.
    pub floor: Option<f64>,
    pub selection: Selection,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self {
            method: Method::Tsvd,
            tau: 1e-12,
            threshold: ThresholdScale::Mode,
            alpha: 1e-12,
            delta: 0.0,
            floor: None,
            selection: Selection::Fixed,
        }
    }
}

impl RegularizerSpec {
    pub fn tsvd(tau: f64) -> Self {
        Self { tau, ..Self::default() }
    }

    pub fn tikhonov(alpha: f64) -> Self {
        Self { method: Method::Tikhonov, alpha, ..Self::default() }
    }

    pub fn discrepancy(method: Method, delta: f64) -> Self {
        Self { method, delta, selection: Selection::Discrepancy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if let Some(f) = self.floor {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("floor must lie in [0, 1), got {f}")));
            }
        }
        match (self.method, self.selection) {
            (Method::Tikhonov, Selection::Fixed) if !(self.alpha > 0.0) => {
                Err(Error::invalid(format!("tikhonov alpha must be positive, got {}", self.alpha)))
            }
            (_, Selection::Discrepancy) if !(self.delta > 0.0) => {
                Err(Error::invalid(format!("discrepancy selection needs delta > 0, got {}", self.delta)))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn identity_and_scalar_systems() {
        let p = SlaeProblem::real(2, 2, &[1.0, 0.0, 0.0, 1.0], &[3.0, -2.0]).unwrap();
        let s = tsvd_solve(&p, 1e-12).unwrap();
        assert_eq!(s.rank, 2);
        assert!((s.solution[0] - c(3.0)).norm() < 1e-15);
        assert!((s.solution[1] - c(-2.0)).norm() < 1e-15);

        let one = SlaeProblem::real(1, 1, &[1.0], &[1.0]).unwrap();
        let t = tikhonov_solve(&one, 1.0).unwrap();
        assert!((t.solution[0] - c(0.5)).norm() < 1e-15);
        assert!(tikhonov_solve(&one, 0.0).is_err());
        assert!(tikhonov_solve(&one, -1.0).is_err());
    }

    #[test]
    fn truncation_drops_tiny_singular_value() {
        let p = SlaeProblem::real(2, 2, &[1.0, 0.0, 0.0, 1e-16], &[1.0, 1.0]).unwrap();
        let s = tsvd_solve(&p, 1e-12).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.solution[0] - c(1.0)).norm() < 1e-15);
        assert_eq!(s.solution[1], c(0.0));
    }

    #[test]
    fn zero_matrix_gives_zero_solution() {
        let p = SlaeProblem::real(2, 2, &[0.0; 4], &[1.0, 2.0]).unwrap();
        let s = tsvd_solve(&p, 1e-12).unwrap();
        assert_eq!(s.rank, 0);
        assert!(s.solution.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn zero_rhs_gives_zero_tikhonov() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = SlaeProblem::new(random_complex(4, 3, &mut rng), DVector::zeros(4)).unwrap();
        let s = tikhonov_solve(&p, 1e-3).unwrap();
        assert!(s.solution.iter().all(|v| v.norm() == 0.0));
    }

    /// Least-squares solution from the normal equations `A* A x = A* b`.
    fn normal_equations(p: &SlaeProblem) -> DVector<Complex64> {
        let ata = p.matrix.adjoint() * &p.matrix;
        let atb = p.matrix.adjoint() * &p.rhs;
        ata.lu().solve(&atb).unwrap()
    }

    #[test]
    fn full_rank_tsvd_and_small_alpha_tikhonov_match_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_complex(6, 5, &mut rng);
        let b = DVector::from_fn(6, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let p = SlaeProblem::new(a, b).unwrap();
        let reference = normal_equations(&p);
        let x = tsvd_solve(&p, 0.0).unwrap().solution;
        assert!((&x - &reference).norm() < 1e-10 * reference.norm());
        let t = tikhonov_solve(&p, 1e-14).unwrap().solution;
        assert!((&t - &reference).norm() < 1e-8 * reference.norm());
        assert!((&t - &x).norm() < 1e-8 * reference.norm());
    }

    #[test]
    fn discrepancy_scalar_closed_form() {
        let p = SlaeProblem::real(1, 1, &[1.0], &[1.0]).unwrap();
        match choose_alpha_discrepancy(&p, 0.5).unwrap() {
            AlphaChoice::Alpha(a) => {
                // residual = α / (1 + α) = 0.5 at α = 1; window [0.5, 0.55] gives α in [1, 11/9]
                assert!((1.0..=11.0 / 9.0 + 1e-9).contains(&a), "{a}");
                let r = tikhonov_solve(&p, a).unwrap().residual;
                assert!((0.5..=0.55).contains(&r));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(choose_alpha_discrepancy(&p, 1.0).unwrap(), AlphaChoice::ZeroSolution);
        assert_eq!(choose_alpha_discrepancy(&p, 2.0).unwrap(), AlphaChoice::ZeroSolution);
    }

    #[test]
    fn discrepancy_random_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SlaeProblem::new(
            random_complex(10, 8, &mut rng),
            DVector::from_fn(10, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0)),
        )
        .unwrap();
        // outside-range part of b is a floor for the residual
        let floor = tsvd_solve(&p, 0.0).unwrap().residual;
        let delta = floor + 0.3 * (p.rhs.norm() - floor);
        let AlphaChoice::Alpha(a) = choose_alpha_discrepancy(&p, delta).unwrap() else {
            panic!("expected alpha")
        };
        let r = tikhonov_solve(&p, a).unwrap().residual;
        assert!(r >= delta * (1.0 - 1e-12) && r <= 1.1 * delta, "{r} vs {delta}");
    }

    #[test]
    fn discrepancy_without_bracket_is_an_error() {
        // inconsistent system: residual can never drop below 1
        let p = SlaeProblem::real(2, 1, &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(choose_alpha_discrepancy(&p, 0.1), Err(Error::Selection(_))));
    }

    #[test]
    fn tsvd_discrepancy_picks_smallest_adequate_rank() {
        let p = SlaeProblem::real(3, 3, &[1.0, 0.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 0.0, 1e-6], &[1.0, 1e-2, 1e-9]).unwrap();
        let svd = Svd::of(&p.matrix);
        assert_eq!(tsvd_discrepancy(&p, &svd, 1e-1, 0.0).rank, 1);
        assert_eq!(tsvd_discrepancy(&p, &svd, 1e-5, 0.0).rank, 2);
        assert_eq!(tsvd_discrepancy(&p, &svd, 1e-12, 0.0).rank, 3);
        assert_eq!(tsvd_discrepancy(&p, &svd, 1e-12, 1e-4).rank, 2);
        assert_eq!(tsvd_discrepancy(&p, &svd, 2.0, 0.0).rank, 0);
    }

    #[test]
    fn spectra() {
        let id = SlaeProblem::real(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3]).unwrap();
        assert_eq!(singular_spectrum(&id), vec![1.0, 1.0, 1.0]);
        let d = SlaeProblem::real(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0], &[0.0; 3]).unwrap();
        let s = singular_spectrum(&d);
        assert!(s.iter().zip([3.0, 2.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        let wide = SlaeProblem::real(2, 4, &[1.0; 8], &[0.0; 2]).unwrap();
        assert_eq!(singular_spectrum(&wide).len(), 2);
    }

    #[test]
    fn one_by_one_slae_layout() {
        use crate::grid::Grid3;
        use crate::kernel::KernelKind;
        use crate::operator::{Boundary, LayeredOperator};
        let src = Grid3::new(
            crate::grid::Axis::periodic(-2.0, 2.0, 8).unwrap(),
            crate::grid::Axis::periodic(-2.0, 2.0, 8).unwrap(),
            crate::grid::Axis::new(1.0, 0.5, 2).unwrap(),
        );
        let tgt = src.with_z(crate::grid::Axis::new(6.0, 0.5, 3).unwrap());
        let op = LayeredOperator::between(KernelKind::DzPotential, &src, &tgt, Boundary::Periodic).unwrap();
        let ks = op.kernel_spectra().unwrap();
        let rhs = SpectralStack::zeros(*ks.plane(), tgt.z);
        let p = build_slae(&ks, &rhs, 5).unwrap();
        assert_eq!(p.matrix.shape(), (3, 2));
        assert_eq!(p.matrix[(2, 1)], ks.value(5, 2, 1) * 0.25);
        let bad = SpectralStack::zeros(*ks.plane(), src.z);
        assert!(build_slae(&ks, &bad, 0).is_err());
    }
}
