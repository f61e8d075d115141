//! Drivers for the simulated experiments: init quality across sparse
//! magnitudes, convergence across sample counts, and streaming on a slowly
//! varying sequence.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::generators::{generate_slow_stream, SlowStream, SlowStreamSpec, SyntheticSpec};
use super::monte_carlo::{run_monte_carlo, McSummary, Solver};
use crate::agm::IterOptions;
use crate::error::{LpsError, Result};
use crate::fewshot::{run_stream, BatchInfo, StreamMethod, StreamReport};
use crate::metrics::frame_error;
use crate::model::{ComplexMatrix, FrameSet, ReconConfig};
use crate::operators::{make_gaussian_frames, make_radial_coil_frames, CoilMaps, MeasurementOp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Config {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub rho: usize,
    pub magnitudes: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self { n: 100, m: 60, r: 2, rho: 2, magnitudes: vec![10.0, 100.0], trials: 100, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Exp1Row {
    pub magnitude: f64,
    pub lps: McSummary,
    pub lr: McSummary,
}

/// Initialization error of the L+S and LR-only solvers for each sparse magnitude.
pub fn run_exp1(c: &Exp1Config) -> Result<Vec<Exp1Row>> {
    let cfg = ReconConfig::simulation(c.rho, c.r);
    c.magnitudes
        .iter()
        .map(|&a| {
            let spec = SyntheticSpec::gaussian(c.n, c.m, c.r, c.rho, a, c.seed);
            Ok(Exp1Row {
                magnitude: a,
                lps: run_monte_carlo(&spec, c.trials, Solver::LpsInit, &cfg)?,
                lr: run_monte_carlo(&spec, c.trials, Solver::LrInit, &cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Config {
    pub n: usize,
    pub r: usize,
    pub rho: usize,
    pub magnitude: f64,
    pub m_values: Vec<usize>,
    /// Sample counts at which the LR-only solver is also run.
    pub lr_m_values: Vec<usize>,
    pub trials: usize,
    pub tau: usize,
    /// The L+S runs stop once their NRMSE drops below this.
    pub converged_below: f64,
    pub seed: u64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            n: 100,
            r: 2,
            rho: 2,
            magnitude: 1.0,
            m_values: vec![60, 90, 100],
            lr_m_values: vec![60],
            trials: 20,
            tau: 600,
            converged_below: 1e-14,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exp2Curve {
    /// Column label, e.g. `lps_m60`.
    pub label: String,
    pub m: usize,
    pub summary: McSummary,
}

/// Full L+S runs for every `m`, plus LR-only runs for `lr_m_values`.
pub fn run_exp2(c: &Exp2Config) -> Result<Vec<Exp2Curve>> {
    let cfg = ReconConfig::simulation(c.rho, c.r);
    let lps_opts = IterOptions { tau: c.tau, early_exit: false, stop_below_nrmse: Some(c.converged_below), step_size: None };
    let lr_opts = IterOptions { tau: c.tau, early_exit: false, stop_below_nrmse: None, step_size: None };
    let mut out = Vec::new();
    let spec = |m| SyntheticSpec::gaussian(c.n, m, c.r, c.rho, c.magnitude, c.seed);
    for &m in &c.m_values {
        let summary = run_monte_carlo(&spec(m), c.trials, Solver::LpsBasic(lps_opts), &cfg)?;
        out.push(Exp2Curve { label: format!("lps_m{m}"), m, summary });
    }
    for &m in &c.lr_m_values {
        let summary = run_monte_carlo(&spec(m), c.trials, Solver::LrBasic(lr_opts), &cfg)?;
        out.push(Exp2Curve { label: format!("lr_m{m}"), m, summary });
    }
    Ok(out)
}

/// How synthetic frames are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Sensing {
    Gaussian { m: usize },
    Radial { nx: usize, ny: usize, coils: usize, lines: usize },
}

impl Sensing {
    /// Operators for `q` frames of length `n`.
    pub fn operators(&self, n: usize, q: usize, seed: u64) -> Result<Vec<Arc<dyn MeasurementOp>>> {
        match *self {
            Sensing::Gaussian { m } => Ok(make_gaussian_frames(n, m, q, seed)),
            Sensing::Radial { nx, ny, coils, lines } => {
                if nx * ny != n {
                    return Err(LpsError::InvalidArgument(format!("{nx}x{ny} grid does not match n = {n}")));
                }
                let maps = Arc::new(CoilMaps::synthetic(nx, ny, coils));
                make_radial_coil_frames(&maps, q, lines, seed)
            }
        }
    }

    /// Noise-free measurements of the columns of `truth`.
    pub fn simulate(&self, truth: &ComplexMatrix, seed: u64) -> Result<FrameSet> {
        FrameSet::simulate(self.operators(truth.nrows(), truth.ncols(), seed)?, truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamExperimentConfig {
    pub stream: SlowStreamSpec,
    pub sensing: Sensing,
    pub recon: ReconConfig,
    pub methods: Vec<StreamMethod>,
    pub concurrent_updates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub burst: bool,
    pub low_latency_error: Option<f64>,
    pub delayed_error: f64,
    pub latency_secs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StreamMethodResult {
    pub method: StreamMethod,
    pub frames: Vec<FrameRecord>,
    pub batches: Vec<BatchInfo>,
    pub report: StreamReport,
}

impl StreamMethodResult {
    /// Mean low-latency error over burst frames that have a low-latency output.
    pub fn mean_burst_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self.frames.iter().filter(|f| f.burst).filter_map(|f| f.low_latency_error).collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    pub fn mean_low_latency_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self.frames.iter().filter_map(|f| f.low_latency_error).collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct StreamExperiment {
    pub truth: SlowStream,
    pub results: Vec<StreamMethodResult>,
}

/// Streams one slowly varying sequence through every requested method and
/// scores each output frame against the truth.
pub fn run_stream_experiment(c: &StreamExperimentConfig) -> Result<StreamExperiment> {
    let truth = generate_slow_stream(&c.stream)?;
    let frames = c.sensing.simulate(&truth.z, c.stream.seed)?;
    let results = c
        .methods
        .iter()
        .map(|&method| {
            let report = run_stream(&frames, method, &c.recon, c.concurrent_updates)?;
            let mut records: Vec<FrameRecord> = (0..truth.z.ncols())
                .map(|k| FrameRecord {
                    frame: k,
                    burst: truth.burst_frames.contains(&k),
                    low_latency_error: None,
                    delayed_error: f64::NAN,
                    latency_secs: None,
                })
                .collect();
            for o in &report.low_latency {
                let rec = &mut records[o.frame_index];
                rec.low_latency_error = Some(frame_error(&o.image, &truth.z.column(o.frame_index).into_owned())?);
                rec.latency_secs = Some(o.latency_secs);
            }
            for o in &report.delayed {
                records[o.frame_index].delayed_error = frame_error(&o.image, &truth.z.column(o.frame_index).into_owned())?;
            }
            Ok(StreamMethodResult { method, frames: records, batches: report.batches.clone(), report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StreamExperiment { truth, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::BurstSpec;

    #[test]
    fn exp1_small_run_has_lps_below_lr() {
        let c = Exp1Config { n: 30, m: 24, trials: 3, magnitudes: vec![10.0], ..Exp1Config::default() };
        let rows = run_exp1(&c).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].lps.trials, 3);
        assert!(rows[0].lps.mean_nrmse < rows[0].lr.mean_nrmse);
    }

    #[test]
    fn exp2_small_run_labels_and_curves() {
        let c = Exp2Config { n: 30, m_values: vec![24, 30], lr_m_values: vec![24], trials: 2, tau: 40, ..Exp2Config::default() };
        let curves = run_exp2(&c).unwrap();
        let labels: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["lps_m24", "lps_m30", "lr_m24"]);
        assert_eq!(curves[2].summary.mean_curve().len(), 41);
    }

    #[test]
    fn radial_sensing_checks_grid() {
        let s = Sensing::Radial { nx: 4, ny: 4, coils: 2, lines: 2 };
        assert!(s.operators(15, 2, 0).is_err());
        let ops = s.operators(16, 3, 0).unwrap();
        assert_eq!(ops.len(), 3);
        assert_eq!(ops[0].cols(), 16);
    }

    #[test]
    fn stream_experiment_scores_every_frame() {
        let mut stream = SlowStreamSpec::new(40, 24, 2, 8, 5);
        stream.bursts = Some(BurstSpec { frame_fraction: 0.1, ..BurstSpec::default() });
        let c = StreamExperimentConfig {
            stream,
            sensing: Sensing::Gaussian { m: 30 },
            recon: ReconConfig { alpha: 8, ..ReconConfig::simulation(8, 2) },
            methods: vec![StreamMethod::FsLr, StreamMethod::FsLps],
            concurrent_updates: false,
        };
        let exp = run_stream_experiment(&c).unwrap();
        assert_eq!(exp.results.len(), 2);
        for r in &exp.results {
            assert_eq!(r.frames.len(), 24);
            assert!(r.frames.iter().all(|f| f.delayed_error.is_finite()));
            assert_eq!(r.frames.iter().filter(|f| f.low_latency_error.is_some()).count(), 16);
            assert_eq!(r.frames.iter().filter(|f| f.burst).count(), exp.truth.burst_frames.len());
        }
    }
}
