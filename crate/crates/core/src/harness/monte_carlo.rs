//! Seeded Monte-Carlo trials of the basic solvers on Gaussian L+S data.

use rayon::prelude::*;
use serde::Serialize;

use super::generators::{generate_lps_truth, SyntheticSpec};
use crate::agm::{agm_lps_basic, agm_lps_init, agm_lr_basic, agm_lr_init, coefficients, IterOptions, IterationTrace};
use crate::error::{LpsError, Result};
use crate::metrics::nrmse;
use crate::model::{FrameSet, ReconConfig};
use crate::operators::make_gaussian_frames;

/// Which solver a trial runs. The `*Init` variants stop after the full
/// initialization `(S_init, U_init, B_init)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    LpsInit,
    LpsBasic(IterOptions),
    LrInit,
    LrBasic(IterOptions),
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::LpsInit => "agm-lps-init",
            Solver::LpsBasic(_) => "agm-lps-basic",
            Solver::LrInit => "agm-lr-init",
            Solver::LrBasic(_) => "agm-lr-basic",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub init_nrmse: f64,
    pub final_nrmse: f64,
    pub iterations: usize,
    pub init_secs: f64,
    pub total_secs: f64,
    /// Absent for init-only solvers.
    #[serde(skip)]
    pub trace: Option<IterationTrace>,
}

impl TrialResult {
    /// NRMSE after each iteration, starting with the init error at index 0.
    pub fn nrmse_curve(&self) -> Vec<f64> {
        let mut out = vec![self.init_nrmse];
        if let Some(t) = &self.trace {
            out.extend(t.records.iter().filter_map(|r| r.nrmse));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub solver: &'static str,
    pub spec: SyntheticSpec,
    pub trials: usize,
    pub mean_nrmse: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std_nrmse: f64,
    pub mean_init_nrmse: f64,
    pub std_init_nrmse: f64,
    pub mean_iterations: f64,
    pub mean_init_secs: f64,
    pub mean_total_secs: f64,
    #[serde(skip)]
    pub results: Vec<TrialResult>,
}

impl McSummary {
    /// Mean NRMSE curve over trials. Trials that stopped early hold their
    /// last value, so every curve has length `max iterations + 1`.
    pub fn mean_curve(&self) -> Vec<f64> {
        let curves: Vec<Vec<f64>> = self.results.iter().map(TrialResult::nrmse_curve).collect();
        let len = curves.iter().map(Vec::len).max().unwrap_or(0);
        (0..len)
            .map(|i| {
                let sum: f64 = curves.iter().map(|c| c[i.min(c.len() - 1)]).sum();
                sum / curves.len() as f64
            })
            .collect()
    }

    /// Same summary with all wall times zeroed, for byte-stable reports.
    pub fn without_timing(mut self) -> Self {
        self.mean_init_secs = 0.0;
        self.mean_total_secs = 0.0;
        for r in &mut self.results {
            r.init_secs = 0.0;
            r.total_secs = 0.0;
            r.trace = r.trace.take().map(IterationTrace::without_timing);
        }
        self
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One trial: truth and operators both drawn from `seed`.
pub fn run_trial(spec: &SyntheticSpec, trial: usize, solver: Solver, cfg: &ReconConfig) -> Result<TrialResult> {
    let seed = spec.seed.wrapping_add(trial as u64);
    let spec = spec.with_seed(seed);
    let truth = generate_lps_truth(&spec)?;
    let frames = FrameSet::simulate(make_gaussian_frames(spec.n, spec.m, spec.q, seed), &truth.x)?;
    let x = &truth.x;
    let t0 = std::time::Instant::now();
    let result = match solver {
        Solver::LpsInit => {
            let init = agm_lps_init(&frames, cfg)?;
            let (b, _) = coefficients(&frames, &init.subspace, Some(&init.sparse))?;
            let secs = t0.elapsed().as_secs_f64();
            let err = nrmse(&(init.subspace.basis() * b + &init.sparse), x)?;
            TrialResult { trial, seed, init_nrmse: err, final_nrmse: err, iterations: 0, init_secs: secs, total_secs: secs, trace: None }
        }
        Solver::LrInit => {
            let init = agm_lr_init(&frames, cfg)?;
            let (b, _) = coefficients(&frames, &init.subspace, None)?;
            let secs = t0.elapsed().as_secs_f64();
            let err = nrmse(&(init.subspace.basis() * b), x)?;
            TrialResult { trial, seed, init_nrmse: err, final_nrmse: err, iterations: 0, init_secs: secs, total_secs: secs, trace: None }
        }
        Solver::LpsBasic(opts) => {
            let run = agm_lps_basic(&frames, cfg, &opts, Some(x))?;
            TrialResult {
                trial,
                seed,
                init_nrmse: nrmse(&run.init_estimate(), x)?,
                final_nrmse: nrmse(&run.estimate.reconstruct(), x)?,
                iterations: run.trace.iterations(),
                init_secs: run.init_secs,
                total_secs: run.total_secs,
                trace: Some(run.trace),
            }
        }
        Solver::LrBasic(opts) => {
            let run = agm_lr_basic(&frames, cfg, &opts, Some(x))?;
            TrialResult {
                trial,
                seed,
                init_nrmse: nrmse(&run.init_estimate(), x)?,
                final_nrmse: nrmse(&run.estimate(), x)?,
                iterations: run.trace.iterations(),
                init_secs: run.init_secs,
                total_secs: run.total_secs,
                trace: Some(run.trace),
            }
        }
    };
    Ok(result)
}

/// Runs trials `0..trials` with seeds `spec.seed + t` in parallel and
/// aggregates them in trial order.
pub fn run_monte_carlo(spec: &SyntheticSpec, trials: usize, solver: Solver, cfg: &ReconConfig) -> Result<McSummary> {
    if trials == 0 {
        return Err(LpsError::InvalidArgument("at least one trial is required".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t, solver, cfg))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&TrialResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
    let (mean_nrmse, std_nrmse) = mean_std(&col(|r| r.final_nrmse));
    let (mean_init_nrmse, std_init_nrmse) = mean_std(&col(|r| r.init_nrmse));
    let (mean_iterations, _) = mean_std(&col(|r| r.iterations as f64));
    let (mean_init_secs, _) = mean_std(&col(|r| r.init_secs));
    let (mean_total_secs, _) = mean_std(&col(|r| r.total_secs));
    Ok(McSummary {
        solver: solver.name(),
        spec: spec.clone(),
        trials,
        mean_nrmse,
        std_nrmse,
        mean_init_nrmse,
        std_init_nrmse,
        mean_iterations,
        mean_init_secs,
        mean_total_secs,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SyntheticSpec, ReconConfig) {
        (SyntheticSpec::gaussian(30, 25, 2, 1, 5.0, 40), ReconConfig::simulation(1, 2))
    }

    #[test]
    fn single_trial_summary_is_the_trial() {
        let (spec, cfg) = small();
        let opts = IterOptions { tau: 20, ..IterOptions::lps(&cfg) };
        let s = run_monte_carlo(&spec, 1, Solver::LpsBasic(opts), &cfg).unwrap();
        let r = run_trial(&spec, 0, Solver::LpsBasic(opts), &cfg).unwrap();
        assert_eq!(s.trials, 1);
        assert_eq!(s.mean_nrmse, r.final_nrmse);
        assert_eq!(s.mean_init_nrmse, r.init_nrmse);
        assert_eq!(s.std_nrmse, 0.0);
        assert_eq!(s.mean_iterations, r.iterations as f64);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (spec, cfg) = small();
        let a = run_monte_carlo(&spec, 4, Solver::LpsInit, &cfg).unwrap();
        let b = run_monte_carlo(&spec, 4, Solver::LpsInit, &cfg).unwrap();
        for (x, y) in a.results.iter().zip(&b.results) {
            assert_eq!(x.final_nrmse.to_bits(), y.final_nrmse.to_bits());
            assert_eq!(x.seed, y.seed);
        }
        assert_eq!(a.mean_nrmse.to_bits(), b.mean_nrmse.to_bits());
        assert_eq!(a.results.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![40, 41, 42, 43]);
    }

    #[test]
    fn aggregates_match_hand_computation() {
        let (spec, cfg) = small();
        let s = run_monte_carlo(&spec, 3, Solver::LrInit, &cfg).unwrap();
        let v: Vec<f64> = s.results.iter().map(|r| r.final_nrmse).collect();
        let m = (v[0] + v[1] + v[2]) / 3.0;
        let sd = (((v[0] - m).powi(2) + (v[1] - m).powi(2) + (v[2] - m).powi(2)) / 2.0).sqrt();
        assert!((s.mean_nrmse - m).abs() < 1e-15);
        assert!((s.std_nrmse - sd).abs() < 1e-15);
    }

    #[test]
    fn mean_curve_pads_early_stops() {
        let (spec, cfg) = small();
        let opts = IterOptions { tau: 30, early_exit: true, ..IterOptions::lps(&cfg) };
        let s = run_monte_carlo(&spec, 3, Solver::LpsBasic(opts), &cfg).unwrap();
        let curve = s.mean_curve();
        let longest = s.results.iter().map(|r| r.iterations).max().unwrap();
        assert_eq!(curve.len(), longest + 1);
        let last = curve.last().unwrap();
        assert!((last - s.mean_nrmse).abs() <= 1e-12 * s.mean_nrmse.max(1.0));
        let init = curve[0];
        assert!((init - s.mean_init_nrmse).abs() < 1e-15);
    }

    #[test]
    fn zero_trials_rejected() {
        let (spec, cfg) = small();
        assert!(run_monte_carlo(&spec, 0, Solver::LpsInit, &cfg).is_err());
    }
}
