//! End-to-end reconstruction: transform the right-hand side layer by layer,
//! solve one regularized system per frequency, transform back, and recover
//! `ξ = ζ / V0` and `c = (1/c0² - ξ)^(-1/2)`. Also the synthetic model used to
//! exercise it and the accuracy metrics.

use std::time::Instant;

use nalgebra::DVector;
use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{NoiseSpec, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{sample, Axis, Grid3, ScalarField3};
use crate::kernel::{v0_field, KernelKind, SourceSet};
use crate::operator::{
    forward_data, trapezoid_weights, Boundary, KernelSpectra, KnownTerms, LayeredOperator, PiBox,
};
use crate::regsolve::{
    build_slae, choose_alpha_with, tikhonov_with, tsvd_discrepancy, tsvd_with_cutoff, AlphaChoice, Method,
    ModeSolution, RegularizerSpec, Selection, SlaeProblem, Svd, singular_spectrum, ThresholdScale, ALPHA_RANGE, UNDERFLOW_GUARD,
};
use crate::spectral::{Plane, SpectralStack};

/// `|V0| < V0_GUARD · max|V0|` leaves `ξ` undefined at a node.
pub const V0_GUARD: f64 = 1e-12;
/// Smallest radicand used when reporting `c`.
pub const RADICAND_FLOOR: f64 = 1e-14;
/// Modes whose leading singular value exceeds this count as active.
pub const ACTIVE_LEVEL: f64 = 1e-6;

pub const MASK_VALID: f64 = 0.0;
pub const MASK_XI: f64 = 1.0;
pub const MASK_CLAMPED: f64 = 2.0;

/// The synthetic perturbation: three tilted Gaussians with z-dependent amplitudes.
pub fn model_xi_at(x: f64, y: f64, z: f64) -> f64 {
    let a1 = (1.0 - 4.0 * (z - 1.5).powi(2)).powi(2);
    let a2 = 0.4 * (1.0 - (z - 1.3).powi(2)).max(0.0);
    let a3 = 0.2 * (1.0 - (z - 1.7).powi(2)).powi(2).max(0.0);
    let g1 = (-x * x - 2.0 * y * y).exp();
    let (u, v) = (x + 4.0, y - 5.0);
    let g2 = (-3.0 * u * u - v * v + u * v).exp();
    let (u, v) = (x - 4.0, y + 4.0);
    let g3 = (-0.9 * (u * u + v * v + u * v)).exp();
    a1 * g1 + a2 * g2 + a3 * g3
}

pub fn model_xi(grid: &Grid3) -> Result<ScalarField3> {
    sample(grid, model_xi_at)
}

/// Grids, sources, and the `V0` integration box of one experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scatter: Grid3,
    pub observe: Grid3,
    pub sources: SourceSet,
    pub pi: PiBox,
    pub c0: f64,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let g = &cfg.geometry;
        let scatter = Grid3::slab(g.r, g.n, g.h, g.big_h, g.m)?;
        let observe = Grid3::slab(g.r, g.n, g.h_y, g.big_h_y, g.m_y)?;
        let sources = cfg.source_set()?;
        for (name, grid) in [("scatterer", &scatter), ("observation", &observe)] {
            let spacing = grid.x.spacing().min(grid.y.spacing()).min(grid.z.spacing());
            let gap = sources.clearance(grid);
            if gap < 0.5 * spacing {
                return Err(Error::Config(format!(
                    "sources.positions: a source lies {gap:e} from a {name} node, closer than half the spacing {spacing:e}"
                )));
            }
        }
        let pi = PiBox::around(g.r, &observe.z, &sources, g.pi_margin, g.pi_layer_count())?;
        Ok(Self { scatter, observe, sources, pi, c0: cfg.c0 })
    }

    pub fn plane(&self) -> Result<Plane> {
        Plane::from_grid(&self.scatter)
    }

    /// The periodic operator from the scatterer slab to the observation slab.
    pub fn operator(&self) -> Result<LayeredOperator> {
        LayeredOperator::between(KernelKind::DzPotential, &self.scatter, &self.observe, Boundary::Periodic)
    }

    pub fn known_terms(&self) -> Result<KnownTerms> {
        KnownTerms::compute(&self.sources, &self.pi, &self.observe, self.c0)
    }

    pub fn v0(&self) -> Result<ScalarField3> {
        v0_field(&self.sources, &self.scatter)
    }

    /// `ζ = ξ V0` for the synthetic model on the scatterer grid.
    pub fn exact_zeta(&self) -> Result<ScalarField3> {
        zeta_on(&self.sources, &self.scatter, model_xi_at)
    }
}

fn zeta_on(sources: &SourceSet, grid: &Grid3, xi: impl Fn(f64, f64, f64) -> f64) -> Result<ScalarField3> {
    let v0 = v0_field(sources, grid)?;
    let mut zeta = sample(grid, xi)?;
    zeta.values_mut().zip_mut_with(v0.values(), |z, v| *z *= v);
    Ok(zeta)
}

/// How synthetic data are discretized relative to the inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Discretization {
    /// The inversion's own operator: periodic, same z-layers.
    #[default]
    Shared,
    /// Zero-padded convolution on a z-grid with twice the resolution.
    Independent,
}

/// Synthetic observations `∂V2/∂z` on the observation slab for a perturbation `ξ`.
pub fn simulate(
    problem: &Problem,
    known: &KnownTerms,
    xi: impl Fn(f64, f64, f64) -> f64,
    discretization: Discretization,
) -> Result<ScalarField3> {
    let (grid, boundary) = match discretization {
        Discretization::Shared => (problem.scatter, Boundary::Periodic),
        Discretization::Independent => {
            let z = problem.scatter.z;
            let fine = Axis::closed(z.origin(), z.last(), 2 * z.count() - 1)?;
            (problem.scatter.with_z(fine), Boundary::Linear)
        }
    };
    let zeta = zeta_on(&problem.sources, &grid, xi)?;
    let op = LayeredOperator::between(KernelKind::DzPotential, &grid, &problem.observe, boundary)?;
    forward_data(&zeta, &op, known)
}

/// Adds i.i.d. uniform noise in `[-level, level]` to every node, drawn in
/// memory order from a ChaCha8 stream seeded with `noise.seed`.
pub fn inject_noise(field: &ScalarField3, noise: NoiseSpec) -> Result<ScalarField3> {
    if !(noise.level >= 0.0 && noise.level.is_finite()) {
        return Err(Error::invalid(format!("noise level must be finite and >= 0, got {}", noise.level)));
    }
    let mut out = field.clone();
    if noise.level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for v in out.values_mut().iter_mut() {
        *v += rng.random_range(-noise.level..=noise.level);
    }
    Ok(out)
}

/// Expected norm of the per-mode noise vector when every right-hand-side
/// node carries independent uniform noise of half-width `level`.
pub fn mode_noise_norm(level: f64, plane: &Plane, layers: usize) -> f64 {
    level * plane.n as f64 * plane.dx * plane.dy * (layers as f64 / 3.0).sqrt()
}

/// Per-mode diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRecord {
    pub mode: usize,
    pub omega: (f64, f64),
    pub rank: usize,
    pub residual: f64,
    /// Leading singular value; `None` when an upper bound already placed
    /// the mode below the truncation level.
    pub leading: Option<f64>,
}

impl ModeRecord {
    pub fn is_active(&self) -> bool {
        self.leading.is_some_and(|s| s > ACTIVE_LEVEL)
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub zeta: ScalarField3,
    pub zeta_spectrum: SpectralStack,
    pub xi: ScalarField3,
    pub c: ScalarField3,
    pub mask: ScalarField3,
    /// One record per mode, in mode order.
    pub modes: Vec<ModeRecord>,
    pub timings: Vec<(String, f64)>,
}

impl ReconstructionResult {
    /// Median retained rank over active modes (`0` if there are none).
    pub fn median_active_rank(&self) -> f64 {
        let mut ranks: Vec<usize> = self.modes.iter().filter(|r| r.is_active()).map(|r| r.rank).collect();
        if ranks.is_empty() {
            return 0.0;
        }
        ranks.sort_unstable();
        let n = ranks.len();
        if n % 2 == 1 {
            ranks[n / 2] as f64
        } else {
            0.5 * (ranks[n / 2 - 1] + ranks[n / 2]) as f64
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|(_, t)| t).sum()
    }
}

/// The frequency-domain solver for one problem: kernel spectra, per-mode
/// norm bounds, and `V0` on the scatterer grid, computed once.
pub struct Reconstructor {
    scatter: Grid3,
    observe: Grid3,
    spectra: KernelSpectra,
    /// Frobenius norm of every mode's matrix, an upper bound on its `ρ_1`.
    frobenius: Vec<f64>,
    /// Modes solved directly; the rest follow by conjugate symmetry.
    representatives: Vec<usize>,
    v0: ScalarField3,
    c0: f64,
    setup_seconds: f64,
}

impl Reconstructor {
    pub fn new(problem: &Problem) -> Result<Self> {
        let start = Instant::now();
        let spectra = problem.operator()?.kernel_spectra()?;
        let plane = *spectra.plane();
        let representatives: Vec<usize> = (0..plane.modes()).filter(|&m| plane.conjugate_mode(m) >= m).collect();
        let weights = spectra.weights().to_vec();
        let (rows, cols) = (spectra.targets(), spectra.sources());
        let frobenius: Vec<f64> = (0..plane.modes())
            .into_par_iter()
            .map(|m| {
                let mut sum = 0.0;
                for i in 0..rows {
                    for (j, w) in weights.iter().enumerate().take(cols) {
                        sum += (spectra.value(m, i, j) * w).norm_sqr();
                    }
                }
                sum.sqrt()
            })
            .collect();
        let v0 = problem.v0()?;
        Ok(Self {
            scatter: problem.scatter,
            observe: problem.observe,
            spectra,
            frobenius,
            representatives,
            v0,
            c0: problem.c0,
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn spectra(&self) -> &KernelSpectra {
        &self.spectra
    }

    pub fn plane(&self) -> &Plane {
        self.spectra.plane()
    }

    pub fn v0(&self) -> &ScalarField3 {
        &self.v0
    }

    /// The system of mode `m` for a transformed right-hand side.
    pub fn system(&self, rhs: &SpectralStack, m: usize) -> Result<SlaeProblem> {
        build_slae(&self.spectra, rhs, m)
    }

    /// Runs the reconstruction for the assembled right-hand side `rhs` on
    /// the observation slab.
    pub fn solve(&self, rhs: &ScalarField3, reg: &RegularizerSpec) -> Result<ReconstructionResult> {
        reg.validate()?;
        let g = rhs.grid();
        if !(g.same_horizontal(&self.observe) && g.z.matches(&self.observe.z)) {
            return Err(Error::invalid("right-hand side grid does not match the observation slab"));
        }
        let mut timings = vec![("kernel_spectra".to_string(), self.setup_seconds)];
        let mut clock = Instant::now();
        let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
            timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
            clock = Instant::now();
        };

        let rhs_spec = SpectralStack::forward(rhs)?;
        lap("rhs_transform", &mut timings);

        let leading = self.leading_singular_values(reg)?;
        let rho_max = leading.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        lap("singular_values", &mut timings);

        let plane = *self.plane();
        let delta = mode_noise_norm(reg.delta, &plane, self.observe.z.count());
        let solved: Vec<(Vec<Complex64>, ModeRecord)> = self
            .representatives
            .par_iter()
            .zip(leading.par_iter())
            .map(|(&m, &rho1)| self.solve_mode(&rhs_spec, m, rho1, rho_max, delta, reg))
            .collect::<Result<_>>()?;
        lap("mode_solves", &mut timings);

        let mut zeta_spectrum = SpectralStack::zeros(plane, self.scatter.z);
        let mut modes = vec![None; plane.modes()];
        for (&m, (x, record)) in self.representatives.iter().zip(&solved) {
            let mc = plane.conjugate_mode(m);
            for (j, v) in x.iter().enumerate() {
                if mc == m {
                    zeta_spectrum.set(m, j, Complex64::new(v.re, 0.0));
                } else {
                    zeta_spectrum.set(m, j, *v);
                    zeta_spectrum.set(mc, j, v.conj());
                }
            }
            modes[m] = Some(*record);
            modes[mc] = Some(ModeRecord { mode: mc, omega: plane.mode_omegas(mc), ..*record });
        }
        let modes: Vec<ModeRecord> = modes.into_iter().map(|r| r.expect("every mode covered")).collect();
        let zeta = zeta_spectrum.inverse(&self.scatter)?;
        lap("inverse_transform", &mut timings);

        let (xi, c, mask) = recover(&zeta, &self.v0, self.c0)?;
        lap("recovery", &mut timings);
        Ok(ReconstructionResult { zeta, zeta_spectrum, xi, c, mask, modes, timings })
    }

    fn floor(&self, reg: &RegularizerSpec) -> f64 {
        reg.floor
            .unwrap_or(self.spectra.targets().max(self.spectra.sources()) as f64 * f64::EPSILON)
    }

    /// Leading singular value of every representative mode that can reach
    /// the truncation level; `None` for modes excluded by their norm bound.
    fn leading_singular_values(&self, reg: &RegularizerSpec) -> Result<Vec<Option<f64>>> {
        let r = self.spectra.targets().min(self.spectra.sources()) as f64;
        let f_max = self.frobenius.iter().fold(0.0f64, |a, &b| a.max(b));
        let bound = match reg.threshold {
            // ρ_max >= f_max / sqrt(r), so anything below tau times that is truncated
            ThresholdScale::Operator => reg.tau * f_max / r.sqrt(),
            ThresholdScale::Mode => 0.0,
            ThresholdScale::Absolute => reg.tau,
        }
        .max(self.floor(reg) * f_max / r.sqrt())
        .max(UNDERFLOW_GUARD);
        let empty = SpectralStack::zeros(*self.plane(), self.observe.z);
        self.representatives
            .par_iter()
            .map(|&m| {
                if self.frobenius[m] < bound {
                    return Ok(None);
                }
                let p = self.system(&empty, m)?;
                Ok(Some(singular_spectrum(&p)[0]))
            })
            .collect()
    }

    fn solve_mode(
        &self,
        rhs: &SpectralStack,
        m: usize,
        rho1: Option<f64>,
        rho_max: f64,
        delta: f64,
        reg: &RegularizerSpec,
    ) -> Result<(Vec<Complex64>, ModeRecord)> {
        let p = self.system(rhs, m)?;
        let cutoff = match (reg.threshold, rho1) {
            (_, None) => f64::INFINITY,
            (ThresholdScale::Operator, _) => reg.tau * rho_max,
            (ThresholdScale::Mode, Some(s)) => reg.tau * s,
            (ThresholdScale::Absolute, _) => reg.tau,
        }
        .max(self.floor(reg) * rho_max);
        let record = |rank: usize, residual: f64| ModeRecord { mode: m, omega: p.omega, rank, residual, leading: rho1 };
        let below = rho1.is_none_or(|s| s < cutoff || s < UNDERFLOW_GUARD);
        if below {
            let zero = vec![Complex64::new(0.0, 0.0); p.matrix.ncols()];
            return Ok((zero, record(0, p.rhs.norm())));
        }
        let svd = Svd::of(&p.matrix);
        // the discrepancy target adds the residual no admissible solution can
        // remove (the right-hand side beyond the cutoff) to the noise level
        let target = |p: &SlaeProblem| delta.hypot(tsvd_with_cutoff(p, &svd, cutoff).residual);
        let sol: ModeSolution = match (reg.method, reg.selection) {
            (Method::Tsvd, Selection::Fixed) => tsvd_with_cutoff(&p, &svd, cutoff),
            (Method::Tsvd, Selection::Discrepancy) => tsvd_discrepancy(&p, &svd, target(&p), cutoff),
            (Method::Tikhonov, Selection::Fixed) => tikhonov_with(&p, &svd, reg.alpha, cutoff)?,
            (Method::Tikhonov, Selection::Discrepancy) => match choose_alpha_with(&p, &svd, target(&p), cutoff) {
                Ok(AlphaChoice::Alpha(alpha)) => tikhonov_with(&p, &svd, alpha, cutoff)?,
                Ok(AlphaChoice::ZeroSolution) => ModeSolution {
                    solution: DVector::zeros(p.matrix.ncols()),
                    rank: 0,
                    residual: p.rhs.norm(),
                    singular_values: svd.singular_values.clone(),
                },
                Err(Error::Selection(_)) => discrepancy_fallback(&p, &svd, target(&p), cutoff)?,
                Err(e) => return Err(e),
            },
        };
        Ok((sol.solution.iter().copied().collect(), record(sol.rank, sol.residual)))
    }
}

/// No `α` in the search interval meets the discrepancy window: use the end
/// of the interval nearest to it.
fn discrepancy_fallback(p: &SlaeProblem, svd: &Svd, delta: f64, cutoff: f64) -> Result<ModeSolution> {
    let rho2 = svd.leading().powi(2);
    let least = tikhonov_with(p, svd, ALPHA_RANGE.0 * rho2, cutoff)?;
    if least.residual >= delta {
        Ok(least)
    } else {
        tikhonov_with(p, svd, ALPHA_RANGE.1 * rho2, cutoff)
    }
}

/// `ξ = ζ / V0` and `c = (1/c0² - ξ)^(-1/2)`, with the mask codes
/// [`MASK_XI`] (`|V0|` below guard; `ξ = 0`, `c = c0` written) and
/// [`MASK_CLAMPED`] (radicand raised to [`RADICAND_FLOOR`]).
pub fn recover(zeta: &ScalarField3, v0: &ScalarField3, c0: f64) -> Result<(ScalarField3, ScalarField3, ScalarField3)> {
    zeta.check_same_grid(v0)?;
    let guard = V0_GUARD * v0.max_abs();
    let inv_c0_sq = 1.0 / (c0 * c0);
    let shape = zeta.values().dim();
    let mut xi = Array3::zeros(shape);
    let mut c = Array3::zeros(shape);
    let mut mask = Array3::zeros(shape);
    ndarray::Zip::from(&mut xi)
        .and(&mut c)
        .and(&mut mask)
        .and(zeta.values())
        .and(v0.values())
        .for_each(|xi, c, mask, &z, &v| {
            if v.abs() < guard || v == 0.0 {
                *xi = 0.0;
                *c = c0;
                *mask = MASK_XI;
                return;
            }
            *xi = z / v;
            let radicand = inv_c0_sq - *xi;
            if radicand > RADICAND_FLOOR {
                *c = radicand.powf(-0.5);
                *mask = MASK_VALID;
            } else {
                *c = RADICAND_FLOOR.powf(-0.5);
                *mask = MASK_CLAMPED;
            }
        });
    let grid = *zeta.grid();
    Ok((
        ScalarField3::from_array(grid, xi)?,
        ScalarField3::from_array(grid, c)?,
        ScalarField3::from_array(grid, mask)?,
    ))
}

/// Per-layer `max|approx - exact| / max|exact|`; `None` where the exact layer vanishes.
pub fn delta_c_profile(approx: &ScalarField3, exact: &ScalarField3) -> Result<Vec<Option<f64>>> {
    approx.check_same_grid(exact)?;
    Ok(approx
        .values()
        .outer_iter()
        .zip(exact.values().outer_iter())
        .map(|(a, e)| {
            let norm = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = a.iter().zip(e.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            (norm > 0.0).then(|| err / norm)
        })
        .collect())
}

/// `|A ζ - U| / |U|` with the inversion's operator (`0` when `U = 0`).
pub fn residual_check(zeta: &ScalarField3, op: &LayeredOperator, rhs: &ScalarField3) -> Result<f64> {
    let applied = op.apply(zeta, rhs.grid())?;
    let norm = rhs.norm_l2();
    if norm == 0.0 {
        return Ok(applied.norm_l2());
    }
    Ok(applied.add_scaled(-1.0, rhs)?.norm_l2() / norm)
}

/// Trapezoidal `L2` norm over a slab.
pub fn slab_norm(field: &ScalarField3) -> f64 {
    let g = field.grid();
    let w = trapezoid_weights(&g.z);
    let area = g.x.spacing() * g.y.spacing();
    let sum: f64 = field
        .values()
        .outer_iter()
        .zip(&w)
        .map(|(layer, wz)| wz * layer.iter().map(|v| v * v).sum::<f64>())
        .sum();
    (sum * area).sqrt()
}
