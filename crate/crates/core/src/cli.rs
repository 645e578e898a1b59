//! The `slabinv` command line: `simulate`, `solve`, `bench`, `spectrum`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{NoiseSpec, RunConfig};
use crate::error::{Error, Result};
use crate::gf::{read_field, write_field};
use crate::grid::ScalarField3;
use crate::operator::{assemble_rhs_background, assemble_rhs_full, RhsMode};
use crate::pipeline::{
    delta_c_profile, inject_noise, model_xi, model_xi_at, simulate, Discretization, Problem, ReconstructionResult,
    Reconstructor,
};
use crate::regsolve::{singular_spectrum, Method, Selection};
use crate::spectral::SpectralStack;

#[derive(Debug, Parser)]
#[command(name = "slabinv", version, about = "Reconstruct a sound-speed perturbation in a slab from layered data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic observations for the configured experiment.
    Simulate(SimulateArgs),
    /// Reconstruct ζ, ξ and c from observations.
    Solve(SolveArgs),
    /// Time the reconstruction for several horizontal grid sizes.
    Bench(BenchArgs),
    /// Print the singular values of one frequency mode.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; defaults to the reference experiment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Simulate with ξ ≡ 0.
    #[arg(long)]
    pub zero_model: bool,
    /// Use a finer, zero-padded discretization for the forward model.
    #[arg(long)]
    pub independent_discretization: bool,
    /// Also write the ξ ≡ 0 run as background.gf.
    #[arg(long)]
    pub write_background: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observed ∂V2/∂z on the observation slab (GF01).
    #[arg(long)]
    pub data: PathBuf,
    /// Background observations for `--rhs-mode background` (GF01).
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, value_parser = parse_rhs_mode)]
    pub rhs_mode: Option<RhsMode>,
    /// Half-width of uniform noise added to the right-hand side.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative TSVD threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Tikhonov parameter; selects Tikhonov regularization.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise level for discrepancy-principle selection.
    #[arg(long)]
    pub discrepancy: Option<f64>,
    /// Regularization method (tsvd or tikhonov).
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Compare against the synthetic model and write delta_c.csv.
    #[arg(long)]
    pub exact_model: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Horizontal grid sizes.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [64usize, 128, 256])]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: Common,
    /// Flattened mode index `k2 * N + k1`.
    #[arg(long, default_value_t = 0)]
    pub mode: usize,
}

fn parse_rhs_mode(s: &str) -> std::result::Result<RhsMode, String> {
    s.parse::<RhsMode>().map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "tsvd" => Ok(Method::Tsvd),
        "tikhonov" => Ok(Method::Tikhonov),
        other => Err(format!("unknown method '{other}' (tsvd|tikhonov)")),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    let workers = match &command {
        Command::Simulate(a) => a.common.workers,
        Command::Solve(a) => a.common.workers,
        Command::Bench(a) => a.common.workers,
        Command::Spectrum(a) => a.common.workers,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::invalid("--workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Spectrum(a) => cmd_spectrum(&a),
    })
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output)?;
    Ok(&cfg.output)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    cfg.independent_discretization |= args.independent_discretization;
    let problem = Problem::from_config(&cfg)?;
    let known = problem.known_terms()?;
    let discretization =
        if cfg.independent_discretization { Discretization::Independent } else { Discretization::Shared };
    let zero = |_: f64, _: f64, _: f64| 0.0;
    let data = if args.zero_model {
        simulate(&problem, &known, zero, discretization)?
    } else {
        simulate(&problem, &known, model_xi_at, discretization)?
    };
    let dir = output_dir(&cfg)?;
    write_field(&dir.join("data.gf"), &data)?;
    if args.write_background {
        let background = simulate(&problem, &known, zero, discretization)?;
        write_field(&dir.join("background.gf"), &background)?;
    }
    println!("wrote {}", dir.join("data.gf").display());
    Ok(())
}

fn apply_solve_flags(cfg: &mut RunConfig, args: &SolveArgs) -> Result<()> {
    let reg = &mut cfg.regularizer;
    if let Some(tau) = args.tau {
        reg.tau = tau;
    }
    if let Some(alpha) = args.alpha {
        reg.method = Method::Tikhonov;
        reg.alpha = alpha;
    }
    if let Some(method) = args.method {
        reg.method = method;
    }
    if let Some(delta) = args.discrepancy {
        reg.selection = Selection::Discrepancy;
        reg.delta = delta;
    }
    if let Some(mode) = args.rhs_mode {
        cfg.rhs_mode = mode;
    }
    if let Some(level) = args.noise {
        cfg.noise.level = level;
    }
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    cfg.validate()
}

fn read_matching(path: &Path, problem: &Problem, what: &str) -> Result<ScalarField3> {
    let field = read_field(path)?;
    let g = field.grid();
    if !(g.same_horizontal(&problem.observe) && g.z.matches(&problem.observe.z)) {
        return Err(Error::invalid(format!(
            "{what} grid in {} does not match the configured observation slab",
            path.display()
        )));
    }
    // adopt the configured grid so downstream grid checks compare like with like
    ScalarField3::from_array(problem.observe, field.into_values())
}

/// Assembled right-hand side for `solve`, with configured noise applied.
pub fn assemble_rhs(
    cfg: &RunConfig,
    problem: &Problem,
    data: &ScalarField3,
    background: Option<&ScalarField3>,
) -> Result<ScalarField3> {
    let rhs = match cfg.rhs_mode {
        RhsMode::Full => assemble_rhs_full(data, &problem.known_terms()?)?,
        RhsMode::Background => {
            let bg = background.ok_or_else(|| Error::invalid("--rhs-mode background needs --background"))?;
            assemble_rhs_background(data, bg)?
        }
    };
    inject_noise(&rhs, NoiseSpec { level: cfg.noise.level, seed: cfg.noise.seed })
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    apply_solve_flags(&mut cfg, args)?;
    let problem = Problem::from_config(&cfg)?;
    let data = read_matching(&args.data, &problem, "data")?;
    let background = args.background.as_deref().map(|p| read_matching(p, &problem, "background")).transpose()?;
    let start = Instant::now();
    let rhs = assemble_rhs(&cfg, &problem, &data, background.as_ref())?;
    let assembly = start.elapsed().as_secs_f64();
    let result = Reconstructor::new(&problem)?.solve(&rhs, &cfg.regularizer)?;
    let dir = output_dir(&cfg)?;
    write_result(dir, &result, assembly)?;
    if args.exact_model {
        let exact = model_xi(&problem.scatter)?;
        let profile = delta_c_profile(&result.xi, &exact)?;
        let mut csv = String::from("z,delta_c\n");
        for (z, d) in problem.scatter.z.coordinates().zip(profile) {
            let _ = writeln!(csv, "{z},{}", d.map_or("nan".to_string(), |v| v.to_string()));
        }
        fs::write(dir.join("delta_c.csv"), csv)?;
    }
    println!(
        "solved {} modes in {:.2} s; median active rank {}",
        result.modes.len(),
        result.total_seconds(),
        result.median_active_rank()
    );
    Ok(())
}

fn write_result(dir: &Path, result: &ReconstructionResult, assembly: f64) -> Result<()> {
    write_field(&dir.join("zeta.gf"), &result.zeta)?;
    write_field(&dir.join("xi.gf"), &result.xi)?;
    write_field(&dir.join("c.gf"), &result.c)?;
    write_field(&dir.join("mask.gf"), &result.mask)?;
    let mut ranks = String::from("m,omega1,omega2,retained,residual\n");
    for r in &result.modes {
        let _ = writeln!(ranks, "{},{},{},{},{:e}", r.mode, r.omega.0, r.omega.1, r.rank, r.residual);
    }
    fs::write(dir.join("ranks.csv"), ranks)?;
    let mut timings = String::from("stage,seconds\n");
    let _ = writeln!(timings, "rhs_assembly,{assembly}");
    for (stage, t) in &result.timings {
        let _ = writeln!(timings, "{stage},{t}");
    }
    fs::write(dir.join("timings.csv"), timings)?;
    Ok(())
}

/// Seconds to set up and run the reconstruction for each horizontal size,
/// on data generated with the inversion's own operator.
pub fn bench_timings(cfg: &RunConfig, sizes: &[usize]) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.geometry.n = n;
            let problem = Problem::from_config(&c)?;
            let rhs = problem.operator()?.apply(&problem.exact_zeta()?, &problem.observe)?;
            let start = Instant::now();
            Reconstructor::new(&problem)?.solve(&rhs, &c.regularizer)?;
            Ok((n, start.elapsed().as_secs_f64()))
        })
        .collect()
}

/// Least-squares slope of `ln t` against `ln N`; `None` with fewer than two sizes.
pub fn fit_exponent(timings: &[(usize, f64)]) -> Option<f64> {
    if timings.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = timings.iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    if let Some(&n) = args.sizes.iter().find(|&&n| n < 2 || n % 2 != 0) {
        return Err(Error::invalid(format!("bench sizes must be even and >= 2, got {n}")));
    }
    let timings = bench_timings(&cfg, &args.sizes)?;
    let mut csv = String::from("N,seconds\n");
    for (n, t) in &timings {
        let _ = writeln!(csv, "{n},{t}");
        println!("N = {n:5}  {t:.3} s");
    }
    fs::write(output_dir(&cfg)?.join("bench.csv"), csv)?;
    match fit_exponent(&timings) {
        Some(p) => println!("fitted exponent: {p:.3}"),
        None => println!("fitted exponent: undefined (need at least two sizes)"),
    }
    Ok(())
}

/// Singular values of the system matrix of mode `m`.
pub fn mode_spectrum(problem: &Problem, m: usize) -> Result<Vec<f64>> {
    let plane = problem.plane()?;
    if m >= plane.modes() {
        return Err(Error::Index { index: m, len: plane.modes() });
    }
    let spectra = problem.operator()?.kernel_spectra()?;
    let empty = SpectralStack::zeros(plane, problem.observe.z);
    let p = crate::regsolve::build_slae(&spectra, &empty, m)?;
    Ok(singular_spectrum(&p))
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let problem = Problem::from_config(&cfg)?;
    let rho = mode_spectrum(&problem, args.mode)?;
    let (w1, w2) = problem.plane()?.mode_omegas(args.mode);
    let mut csv = String::from("m,omega1,omega2,k,rho\n");
    for (k, r) in rho.iter().enumerate() {
        let _ = writeln!(csv, "{},{w1},{w2},{},{r:e}", args.mode, k + 1);
    }
    let path = output_dir(&cfg)?.join(format!("spectrum_{}.csv", args.mode));
    fs::write(&path, &csv)?;
    print!("{csv}");
    Ok(())
}
