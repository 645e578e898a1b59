use slabinv::config::{NoiseSpec, RunConfig};
use slabinv::operator::assemble_rhs_full;
use slabinv::pipeline::{inject_noise, model_xi_at, simulate, Discretization, Problem, Reconstructor};
use slabinv::regsolve::{Method, RegularizerSpec};

fn reduced(n: usize, m: usize) -> Problem {
    let mut cfg = RunConfig::default();
    cfg.geometry.n = n;
    cfg.geometry.m = m;
    cfg.geometry.m_y = m;
    Problem::from_config(&cfg).unwrap()
}

#[test]
fn exported_fields_are_finite_under_noise() {
    let problem = reduced(32, 11);
    let known = problem.known_terms().unwrap();
    let data = simulate(&problem, &known, model_xi_at, Discretization::Independent).unwrap();
    let rhs = inject_noise(&assemble_rhs_full(&data, &known).unwrap(), NoiseSpec { level: 1e-6, seed: 1 }).unwrap();
    let rec = Reconstructor::new(&problem).unwrap();
    for reg in [RegularizerSpec::default(), RegularizerSpec::tikhonov(1e-10), RegularizerSpec::discrepancy(Method::Tikhonov, 1e-6)] {
        let out = rec.solve(&rhs, &reg).unwrap();
        for field in [&out.zeta, &out.xi, &out.c, &out.mask] {
            assert!(field.values().iter().all(|v| v.is_finite()));
        }
        assert!(out.mask.values().iter().all(|&m| m == 0.0 || m == 1.0 || m == 2.0));
    }
}

#[test]
fn reference_rank_levels() {
    let cfg = RunConfig::default();
    let problem = Problem::from_config(&cfg).unwrap();
    let known = problem.known_terms().unwrap();
    let data = simulate(&problem, &known, model_xi_at, Discretization::Shared).unwrap();
    let rhs = assemble_rhs_full(&data, &known).unwrap();
    let rec = Reconstructor::new(&problem).unwrap();
    let clean = rec.solve(&rhs, &cfg.regularizer).unwrap().median_active_rank();
    let noisy_rhs = inject_noise(&rhs, NoiseSpec { level: 1e-8, seed: 7 }).unwrap();
    let noisy =
        rec.solve(&noisy_rhs, &RegularizerSpec::discrepancy(Method::Tsvd, 1e-8)).unwrap().median_active_rank();
    println!("median active rank: unperturbed {clean}, noise 1e-8 {noisy}");
    assert!(noisy < clean, "{noisy} vs {clean}");
    assert!((10.0..=40.0).contains(&clean), "unperturbed median rank {clean} outside [10, 40]");
    assert!((2.0..=8.0).contains(&noisy), "perturbed median rank {noisy} outside [2, 8]");
}
