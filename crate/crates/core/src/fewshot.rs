//! Mini-batch streaming reconstruction. The model `(mean, U)` is learned on
//! batches of `alpha` frames; every frame after the first batch gets a cheap
//! low-latency estimate from the state of the previous batch, and every
//! completed batch gets a delayed (full) reconstruction.

use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::agm::{
    agm_lps_init, agm_lps_iterate, agm_lr_init, agm_lr_iterate, apply_sparse, greedy_sparse_column, initial_sparse,
    solve_coeffs, IterOptions, IterationTrace,
};
use crate::error::{LpsError, Result};
use crate::hierarchical::{estimate_mean, residual_layer};
use crate::model::{ComplexMatrix, ComplexVector, Frame, FrameSet, ReconConfig, Subspace};
use crate::solvers::cgls;
use crate::threshold::soft_threshold_vec;

/// Model learned from one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchState {
    pub mean: ComplexVector,
    pub subspace: Subspace,
    /// 1-based index of the batch this state was fitted on.
    pub batch_index: usize,
    pub rank: usize,
    /// Gradient step fixed on the first batch and reused by warm updates.
    pub step_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    LowLatency,
    Delayed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    pub frame_index: usize,
    pub image: ComplexVector,
    /// Wall time of the per-frame estimate, or of the whole batch update for
    /// delayed outputs.
    pub latency_secs: f64,
    pub mode: OutputMode,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub state: MiniBatchState,
    /// `n x batch size`
    pub delayed: ComplexMatrix,
    pub trace: IterationTrace,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMethod {
    FsLr,
    FsLps,
}

/// A zero step (first batch already fit exactly) is re-derived instead.
fn warm_step(state: &MiniBatchState) -> Option<f64> {
    (state.step_size > 0.0).then_some(state.step_size)
}

fn check_batch(frames: &FrameSet) -> Result<()> {
    if frames.q() < 2 {
        return Err(LpsError::InvalidArgument(format!("a mini-batch needs at least 2 frames, got {}", frames.q())));
    }
    Ok(())
}

fn assemble(
    mean: &ComplexVector,
    subspace: &Subspace,
    coeffs: &ComplexMatrix,
    sparse: &ComplexMatrix,
    residual: &ComplexMatrix,
) -> ComplexMatrix {
    let mut z = subspace.basis() * coeffs + sparse + residual;
    for mut c in z.column_iter_mut() {
        c += mean;
    }
    z
}

#[allow(clippy::too_many_arguments)]
fn finish_batch(
    tilde: &FrameSet,
    mean: ComplexVector,
    subspace: Subspace,
    coeffs: ComplexMatrix,
    sparse: ComplexMatrix,
    trace: IterationTrace,
    batch_index: usize,
    cfg: &ReconConfig,
    start: Instant,
) -> Result<BatchResult> {
    let residual = residual_layer(tilde, &subspace, &coeffs, &sparse, cfg.residual_cgls_iters)?;
    let delayed = assemble(&mean, &subspace, &coeffs, &sparse, &residual);
    let rank = subspace.rank();
    let step_size = trace.step_size;
    Ok(BatchResult {
        state: MiniBatchState { mean, subspace, batch_index, rank, step_size },
        delayed,
        trace,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// First batch, LR model: cold mean, spectral init, `tau_init` iterations.
pub fn fs_lr_init_batch(frames: &FrameSet, cfg: &ReconConfig) -> Result<BatchResult> {
    cfg.validate()?;
    check_batch(frames)?;
    let start = Instant::now();
    let mean = estimate_mean(frames, &ComplexVector::zeros(frames.n()), cfg.mean_cgls_iters_cold)?;
    let tilde = frames.subtract_common(&mean)?;
    let init = agm_lr_init(&tilde, cfg)?;
    let opts = IterOptions::lr(cfg, cfg.tau_init);
    let (u, b, trace) = agm_lr_iterate(&tilde, &init.subspace, cfg, &opts, None)?;
    let sparse = ComplexMatrix::zeros(frames.n(), frames.q());
    finish_batch(&tilde, mean, u, b, sparse, trace, 1, cfg, start)
}

/// Later batch, LR model: warm mean (few iterations from the previous mean)
/// and `tau_warm` iterations from the previous basis.
pub fn fs_lr_update_batch(frames: &FrameSet, state: &MiniBatchState, cfg: &ReconConfig) -> Result<BatchResult> {
    cfg.validate()?;
    check_batch(frames)?;
    let start = Instant::now();
    let mean = estimate_mean(frames, &state.mean, cfg.mean_cgls_iters_warm)?;
    let tilde = frames.subtract_common(&mean)?;
    let opts = IterOptions { step_size: warm_step(state), ..IterOptions::lr(cfg, cfg.tau_warm) };
    let (u, b, trace) = agm_lr_iterate(&tilde, &state.subspace, cfg, &opts, None)?;
    let sparse = ComplexMatrix::zeros(frames.n(), frames.q());
    finish_batch(&tilde, mean, u, b, sparse, trace, state.batch_index + 1, cfg, start)
}

/// First batch, L+S model.
pub fn fs_lps_init_batch(frames: &FrameSet, cfg: &ReconConfig) -> Result<BatchResult> {
    cfg.validate()?;
    check_batch(frames)?;
    let start = Instant::now();
    let mean = estimate_mean(frames, &ComplexVector::zeros(frames.n()), cfg.mean_cgls_iters_cold)?;
    let tilde = frames.subtract_common(&mean)?;
    let init = agm_lps_init(&tilde, cfg)?;
    let opts = IterOptions::lps(cfg);
    let (est, trace) = agm_lps_iterate(&tilde, &init.sparse, &init.subspace, cfg, &opts, None)?;
    finish_batch(&tilde, mean, est.subspace, est.coeffs, est.sparse, trace, 1, cfg, start)
}

/// Later batch, L+S model: the sparse layer is re-initialized on the new
/// batch; mean and basis are warm-started.
pub fn fs_lps_update_batch(frames: &FrameSet, state: &MiniBatchState, cfg: &ReconConfig) -> Result<BatchResult> {
    cfg.validate()?;
    check_batch(frames)?;
    let start = Instant::now();
    let mean = estimate_mean(frames, &state.mean, cfg.mean_cgls_iters_warm)?;
    let tilde = frames.subtract_common(&mean)?;
    let s_init = initial_sparse(&tilde, cfg)?;
    let opts = IterOptions { tau: cfg.tau_warm, step_size: warm_step(state), ..IterOptions::lps(cfg) };
    let (est, trace) = agm_lps_iterate(&tilde, &s_init, &state.subspace, cfg, &opts, None)?;
    finish_batch(&tilde, mean, est.subspace, est.coeffs, est.sparse, trace, state.batch_index + 1, cfg, start)
}

fn check_frame(frame: &Frame, state: &MiniBatchState) -> Result<()> {
    if frame.op.cols() != state.mean.len() || frame.y.len() != frame.op.rows() {
        return Err(LpsError::DimensionMismatch(format!(
            "frame {}x{} with {} measurements against a state of length {}",
            frame.op.rows(),
            frame.op.cols(),
            frame.y.len(),
            state.mean.len()
        )));
    }
    Ok(())
}

fn coefficients_warn(au: &ComplexMatrix, rhs: &ComplexVector, frame_index: usize) -> Result<ComplexVector> {
    let (b, bad) = solve_coeffs(au, rhs)?;
    if bad {
        warn!("frame {frame_index}: A_k U is rank deficient; using minimum-norm coefficients");
    }
    Ok(b)
}

fn low_latency_core(
    frame: &Frame,
    frame_index: usize,
    state: &MiniBatchState,
    cfg: &ReconConfig,
    with_sparse: bool,
) -> Result<StreamOutput> {
    check_frame(frame, state)?;
    let start = Instant::now();
    let op = frame.op.as_ref();
    let y_tilde = &frame.y - op.apply(&state.mean);
    let sparse = if with_sparse {
        match cfg.hard_sparsity_per_column {
            Some(rho) => greedy_sparse_column(op, &y_tilde, rho)?,
            None => {
                let c = op.adjoint(&y_tilde);
                let level = cfg.init_thresh_factor * c.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                soft_threshold_vec(&c, level)
            }
        }
    } else {
        ComplexVector::zeros(op.cols())
    };
    let rhs = if with_sparse { &y_tilde - apply_sparse(op, &sparse) } else { y_tilde };
    let au = op.apply_mat(state.subspace.basis());
    let b = coefficients_warn(&au, &rhs, frame_index)?;
    let r = &rhs - &au * &b;
    let e = cgls(op, &r, &ComplexVector::zeros(op.cols()), cfg.residual_cgls_iters)?.solution;
    let image = &state.mean + state.subspace.basis() * &b + sparse + e;
    Ok(StreamOutput { frame_index, image, latency_secs: start.elapsed().as_secs_f64(), mode: OutputMode::LowLatency })
}

/// `z = mean + U b + e` with `b` fitted to the mean-subtracted measurements.
pub fn fs_lr_low_latency(frame: &Frame, frame_index: usize, state: &MiniBatchState, cfg: &ReconConfig) -> Result<StreamOutput> {
    low_latency_core(frame, frame_index, state, cfg, false)
}

/// `z = mean + s + U b + e` with a single-shot thresholded sparse estimate.
pub fn fs_lps_low_latency(frame: &Frame, frame_index: usize, state: &MiniBatchState, cfg: &ReconConfig) -> Result<StreamOutput> {
    low_latency_core(frame, frame_index, state, cfg, true)
}

fn run_batch(method: StreamMethod, frames: &FrameSet, state: Option<&MiniBatchState>, cfg: &ReconConfig) -> Result<BatchResult> {
    match (method, state) {
        (StreamMethod::FsLr, None) => fs_lr_init_batch(frames, cfg),
        (StreamMethod::FsLr, Some(s)) => fs_lr_update_batch(frames, s, cfg),
        (StreamMethod::FsLps, None) => fs_lps_init_batch(frames, cfg),
        (StreamMethod::FsLps, Some(s)) => fs_lps_update_batch(frames, s, cfg),
    }
}

/// Summary of one completed mini-batch update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchInfo {
    pub batch_index: usize,
    pub first_frame: usize,
    pub size: usize,
    pub iterations: usize,
    pub elapsed_secs: f64,
}

struct PendingUpdate {
    first_frame: usize,
    size: usize,
    handle: Option<JoinHandle<Result<BatchResult>>>,
    ready: Option<Result<BatchResult>>,
}

/// Frame-by-frame streaming driver.
///
/// Frames must be pushed in index order. The low-latency estimate of a frame
/// in batch `l` only uses the state published from batch `l - 1`. With
/// `concurrent_updates`, a batch update runs on its own thread and is joined
/// (and published) when the first frame of the next batch arrives.
pub struct StreamProcessor {
    method: StreamMethod,
    cfg: Arc<ReconConfig>,
    concurrent: bool,
    state: Option<MiniBatchState>,
    buffer: Vec<Frame>,
    buffer_start: usize,
    next_index: usize,
    pending: Option<PendingUpdate>,
    batches: Vec<BatchInfo>,
}

impl StreamProcessor {
    pub fn new(method: StreamMethod, cfg: ReconConfig, concurrent_updates: bool) -> Result<Self> {
        cfg.validate()?;
        if cfg.alpha < 2 {
            return Err(LpsError::InvalidConfig("alpha must be at least 2 for streaming".into()));
        }
        Ok(Self {
            method,
            cfg: Arc::new(cfg),
            concurrent: concurrent_updates,
            state: None,
            buffer: Vec::new(),
            buffer_start: 0,
            next_index: 0,
            pending: None,
            batches: Vec::new(),
        })
    }

    /// Latest published state.
    pub fn state(&self) -> Option<&MiniBatchState> {
        self.state.as_ref()
    }

    pub fn batches(&self) -> &[BatchInfo] {
        &self.batches
    }

    /// Feeds the next frame; returns any delayed outputs that became
    /// available followed by this frame's low-latency output (none during
    /// the first batch).
    pub fn push(&mut self, frame: Frame) -> Result<Vec<StreamOutput>> {
        let k = self.next_index;
        let mut out = Vec::new();
        if k.is_multiple_of(self.cfg.alpha) {
            out.extend(self.publish()?);
        }
        if let Some(state) = &self.state {
            let o = match self.method {
                StreamMethod::FsLr => fs_lr_low_latency(&frame, k, state, &self.cfg)?,
                StreamMethod::FsLps => fs_lps_low_latency(&frame, k, state, &self.cfg)?,
            };
            out.push(o);
        }
        if self.buffer.is_empty() {
            self.buffer_start = k;
        }
        self.buffer.push(frame);
        self.next_index += 1;
        if self.buffer.len() == self.cfg.alpha {
            self.launch()?;
        }
        Ok(out)
    }

    /// Processes a trailing partial batch (if it has at least 2 frames) and
    /// returns the remaining delayed outputs.
    pub fn finish(&mut self) -> Result<Vec<StreamOutput>> {
        let mut out = self.publish()?;
        if self.buffer.len() >= 2 {
            self.launch()?;
            out.extend(self.publish()?);
        } else if !self.buffer.is_empty() {
            warn!("final batch of {} frame(s) too small for a model update", self.buffer.len());
            self.buffer.clear();
        }
        Ok(out)
    }

    fn launch(&mut self) -> Result<()> {
        let frames = FrameSet::new(std::mem::take(&mut self.buffer))?;
        let size = frames.q();
        let first_frame = self.buffer_start;
        let method = self.method;
        let state = self.state.clone();
        let cfg = Arc::clone(&self.cfg);
        let mut pending = PendingUpdate { first_frame, size, handle: None, ready: None };
        if self.concurrent {
            pending.handle = Some(std::thread::spawn(move || run_batch(method, &frames, state.as_ref(), &cfg)));
        } else {
            pending.ready = Some(run_batch(method, &frames, state.as_ref(), &cfg));
        }
        self.pending = Some(pending);
        Ok(())
    }

    fn publish(&mut self) -> Result<Vec<StreamOutput>> {
        let Some(p) = self.pending.take() else {
            return Ok(Vec::new());
        };
        let res = match (p.ready, p.handle) {
            (Some(r), _) => r,
            (None, Some(h)) => h
                .join()
                .map_err(|_| LpsError::InvalidArgument("mini-batch update thread panicked".into()))?,
            (None, None) => unreachable!("pending update without result or worker"),
        }?;
        self.batches.push(BatchInfo {
            batch_index: res.state.batch_index,
            first_frame: p.first_frame,
            size: p.size,
            iterations: res.trace.iterations(),
            elapsed_secs: res.elapsed_secs,
        });
        let out = (0..p.size)
            .map(|j| StreamOutput {
                frame_index: p.first_frame + j,
                image: res.delayed.column(j).into_owned(),
                latency_secs: res.elapsed_secs,
                mode: OutputMode::Delayed,
            })
            .collect();
        self.state = Some(res.state);
        Ok(out)
    }
}

/// Everything produced by replaying a recorded stream.
#[derive(Debug, Clone)]
pub struct StreamReport {
    /// Ordered by frame index; frames of the first batch have none.
    pub low_latency: Vec<StreamOutput>,
    /// Ordered by frame index.
    pub delayed: Vec<StreamOutput>,
    pub batches: Vec<BatchInfo>,
    pub final_state: Option<MiniBatchState>,
}

impl StreamReport {
    /// Low-latency images as columns (frames without one are zero).
    pub fn low_latency_matrix(&self, n: usize, q: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, q);
        for o in &self.low_latency {
            m.set_column(o.frame_index, &o.image);
        }
        m
    }

    pub fn delayed_matrix(&self, n: usize, q: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, q);
        for o in &self.delayed {
            m.set_column(o.frame_index, &o.image);
        }
        m
    }
}

/// Pushes every frame of `frames` through a [`StreamProcessor`].
pub fn run_stream(frames: &FrameSet, method: StreamMethod, cfg: &ReconConfig, concurrent_updates: bool) -> Result<StreamReport> {
    let mut proc = StreamProcessor::new(method, cfg.clone(), concurrent_updates)?;
    let mut low_latency = Vec::new();
    let mut delayed = Vec::new();
    let mut sort = |outs: Vec<StreamOutput>| {
        for o in outs {
            match o.mode {
                OutputMode::LowLatency => low_latency.push(o),
                OutputMode::Delayed => delayed.push(o),
            }
        }
    };
    for f in frames.frames() {
        sort(proc.push(f.clone())?);
    }
    sort(proc.finish()?);
    delayed.sort_by_key(|o| o.frame_index);
    Ok(StreamReport { low_latency, delayed, batches: proc.batches.clone(), final_state: proc.state.clone() })
}
