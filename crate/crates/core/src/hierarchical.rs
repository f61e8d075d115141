//! Three-level batch reconstruction: mean image, then L+S (or LR) layer on the
//! mean-subtracted data, then a small per-frame residual.

use rayon::prelude::*;

use crate::agm::{
    agm_lps_init, agm_lps_iterate, agm_lr_init, agm_lr_iterate, ExitReason, IterOptions, IterationTrace,
};
use crate::error::{LpsError, Result};
use crate::model::{ComplexMatrix, ComplexVector, FrameSet, LpSEstimate, ReconConfig, Subspace};
use crate::operators::StackedOp;
use crate::solvers::cgls;

/// Common image fitted to every frame: CGLS on the stacked system from `init`.
pub fn estimate_mean(frames: &FrameSet, init: &ComplexVector, iters: usize) -> Result<ComplexVector> {
    let stacked = StackedOp::new(frames.frames());
    let y = stacked.stacked_measurements();
    Ok(cgls(&stacked, &y, init, iters)?.solution)
}

/// Per-frame residual layer: `e_k = CGLS(A_k, y_k - A_k(U b_k + s_k), 0, iters)`.
pub fn residual_layer(
    frames: &FrameSet,
    subspace: &Subspace,
    coeffs: &ComplexMatrix,
    sparse: &ComplexMatrix,
    iters: usize,
) -> Result<ComplexMatrix> {
    let n = frames.n();
    let zero = ComplexVector::zeros(n);
    let cols: Vec<ComplexVector> = frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let x = subspace.basis() * coeffs.column(k) + sparse.column(k);
            let r = &f.y - f.op.apply(&x);
            Ok(cgls(f.op.as_ref(), &r, &zero, iters)?.solution)
        })
        .collect::<Result<_>>()?;
    Ok(ComplexMatrix::from_columns(&cols))
}

fn empty_trace() -> IterationTrace {
    IterationTrace { records: Vec::new(), flagged_frames: Vec::new(), step_size: 0.0, exit: ExitReason::MaxIterations }
}

fn check_batch(frames: &FrameSet, cfg: &ReconConfig) -> Result<()> {
    cfg.validate()?;
    if frames.q() < 2 {
        return Err(LpsError::InvalidArgument(format!("batch reconstruction needs q >= 2, got {}", frames.q())));
    }
    Ok(())
}

/// Output when the data are explained by the mean alone.
fn mean_only(mean: ComplexVector, subspace: Subspace, q: usize) -> Result<(LpSEstimate, IterationTrace)> {
    let n = mean.len();
    let r = subspace.rank();
    let est = LpSEstimate::new(
        mean,
        subspace,
        ComplexMatrix::zeros(r, q),
        ComplexMatrix::zeros(n, q),
        ComplexMatrix::zeros(n, q),
    )?;
    Ok((est, empty_trace()))
}

/// Mean, then L+S on the mean-subtracted data, then the residual layer.
pub fn reconstruct_lps_batch(frames: &FrameSet, cfg: &ReconConfig) -> Result<(LpSEstimate, IterationTrace)> {
    check_batch(frames, cfg)?;
    let mean = estimate_mean(frames, &ComplexVector::zeros(frames.n()), cfg.mean_cgls_iters_cold)?;
    let tilde = frames.subtract_common(&mean)?;
    let init = agm_lps_init(&tilde, cfg)?;
    if init.zero_data {
        return mean_only(mean, init.subspace, frames.q());
    }
    let (est, trace) = agm_lps_iterate(&tilde, &init.sparse, &init.subspace, cfg, &IterOptions::lps(cfg), None)?;
    let residual = residual_layer(&tilde, &est.subspace, &est.coeffs, &est.sparse, cfg.residual_cgls_iters)?;
    let est = LpSEstimate::new(mean, est.subspace, est.coeffs, est.sparse, residual)?;
    Ok((est, trace))
}

/// LR-only analogue: the sparse layer is identically zero.
pub fn reconstruct_lr_batch(frames: &FrameSet, cfg: &ReconConfig) -> Result<(LpSEstimate, IterationTrace)> {
    check_batch(frames, cfg)?;
    let (n, q) = (frames.n(), frames.q());
    let mean = estimate_mean(frames, &ComplexVector::zeros(n), cfg.mean_cgls_iters_cold)?;
    let tilde = frames.subtract_common(&mean)?;
    let init = agm_lr_init(&tilde, cfg)?;
    if init.zero_data {
        return mean_only(mean, init.subspace, q);
    }
    let (subspace, coeffs, trace) =
        agm_lr_iterate(&tilde, &init.subspace, cfg, &IterOptions::lr(cfg, cfg.tau_init), None)?;
    let sparse = ComplexMatrix::zeros(n, q);
    let residual = residual_layer(&tilde, &subspace, &coeffs, &sparse, cfg.residual_cgls_iters)?;
    let est = LpSEstimate::new(mean, subspace, coeffs, sparse, residual)?;
    Ok((est, trace))
}
