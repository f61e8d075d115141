use std::time::Instant;

use lps_core::agm::IterOptions;
use lps_core::harness::*;
use lps_core::model::ReconConfig;

fn fixed_work() -> (SyntheticSpec, ReconConfig, Solver) {
    let cfg = ReconConfig::simulation(2, 2);
    let opts = IterOptions { tau: 25, early_exit: false, stop_below_nrmse: None, step_size: None };
    (SyntheticSpec::gaussian(60, 40, 2, 2, 10.0, 100), cfg, Solver::LpsBasic(opts))
}

fn best_of(reps: usize, f: impl Fn()) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn monte_carlo_time_is_linear_in_trials() {
    let (spec, cfg, solver) = fixed_work();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        run_monte_carlo(&spec, 1, solver, &cfg).unwrap();
        let t3 = best_of(3, || drop(run_monte_carlo(&spec, 3, solver, &cfg).unwrap()));
        let t9 = best_of(3, || drop(run_monte_carlo(&spec, 9, solver, &cfg).unwrap()));
        let ratio = (t9 / 9.0) / (t3 / 3.0);
        assert!((0.8..=1.2).contains(&ratio), "per-trial time ratio {ratio} (3 trials {t3:.3}s, 9 trials {t9:.3}s)");
    });
}

#[test]
fn thread_count_does_not_change_results() {
    let (spec, cfg, solver) = fixed_work();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_monte_carlo(&spec, 4, solver, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.final_nrmse.to_bits(), y.final_nrmse.to_bits());
        assert_eq!(x.nrmse_curve(), y.nrmse_curve());
    }
    assert_eq!(a.mean_nrmse.to_bits(), b.mean_nrmse.to_bits());
}

#[test]
fn lps_init_beats_lr_init_and_improves_with_magnitude_contrast() {
    let c = Exp1Config { n: 60, m: 40, trials: 6, ..Exp1Config::default() };
    let rows = run_exp1(&c).unwrap();
    for row in &rows {
        assert!(row.lps.mean_nrmse < 0.2, "a = {}: {}", row.magnitude, row.lps.mean_nrmse);
        assert!(row.lr.mean_nrmse > 0.5, "a = {}: {}", row.magnitude, row.lr.mean_nrmse);
    }
    // relative init error falls as the spikes dominate the energy
    assert!(rows[1].lps.mean_nrmse < rows[0].lps.mean_nrmse);
}

#[test]
fn incoherence_of_generated_truth_is_moderate() {
    let spec = SyntheticSpec::gaussian(100, 60, 2, 2, 1.0, 3);
    let t = generate_lps_truth(&spec).unwrap();
    let sigma_max = t.low_rank.clone().svd(false, false).singular_values.max();
    let (mu_l, mu_r) = incoherence_mu(&t.subspace, &t.coeffs, sigma_max).unwrap();
    // bounds: 1 <= mu_left <= sqrt(n/r), mu_right >= sigma_min / sigma_max
    assert!(mu_l >= 1.0 - 1e-12 && mu_l < (50f64).sqrt());
    assert!(mu_r > 0.0 && mu_r < 5.0);
}
