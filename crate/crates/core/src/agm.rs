//! AltGDmin solvers on raw measurements: the L+S solver (spectral init plus
//! iterations) and its LR-only specialization.
//!
//! Each iteration fully minimizes over the per-frame variables (`b_k` by least
//! squares, `s_k` by thresholded back-projection) and takes one projected
//! gradient step on the shared basis `U`, followed by QR re-orthonormalization.
//! The cost is `f(S, U, B) = sum_k ||y_k - A_k (U b_k + s_k)||^2`.

use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_err, LpsError, Result};
use crate::metrics::{nrmse, relative_change};
use crate::model::{ComplexMatrix, ComplexVector, FrameSet, LpSEstimate, ReconConfig, Subspace, C64};
use crate::operators::MeasurementOp;
use crate::solvers::{leading_svd, ls_coeffs, ls_coeffs_min_norm, rank_cap, thin_qr};
use crate::solvers::rank_from_energy;
use crate::threshold::{soft_threshold_vec, top_k_support};

/// Power iterations used for the spectral norm in the step-size rule.
const STEP_NORM_POWER_ITERS: usize = 30;

/// Relative residual below which the first iterate counts as an exact fit.
const EXACT_FIT_REL: f64 = 1e-13;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `f(S_t, U_t, B_t)` after the sparse update.
    pub cost: f64,
    /// `f(S_{t-1}, U_t, B_{t-1})`: cost entering the B update (absent at t = 1).
    pub cost_before_b: Option<f64>,
    /// `f(S_{t-1}, U_t, B_t)`: cost right after the B update.
    pub cost_after_b: f64,
    pub nrmse: Option<f64>,
    /// Squared relative change of `X_t = U_t B_t + S_t` against `X_{t-1}`.
    pub relative_change: Option<f64>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExitReason {
    MaxIterations,
    SmallChange,
    TargetReached,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Frames whose `A_k U` was rank deficient at some iteration.
    pub flagged_frames: Vec<usize>,
    pub step_size: f64,
    pub exit: ExitReason,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_nrmse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.nrmse)
    }

    /// Timing-free copy, for byte-stable reports.
    pub fn without_timing(mut self) -> Self {
        for r in &mut self.records {
            r.elapsed_secs = 0.0;
        }
        self
    }
}

/// Loop controls for one call of the iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    pub tau: usize,
    pub early_exit: bool,
    /// Stop as soon as the NRMSE against the supplied truth drops below this.
    pub stop_below_nrmse: Option<f64>,
    /// Use this step size instead of deriving one from the first gradient.
    pub step_size: Option<f64>,
}

impl IterOptions {
    pub fn lps(cfg: &ReconConfig) -> Self {
        Self { tau: cfg.tau_init, early_exit: cfg.early_exit, stop_below_nrmse: None, step_size: None }
    }

    pub fn lr(cfg: &ReconConfig, tau: usize) -> Self {
        Self { tau, early_exit: cfg.lr_early_exit, stop_below_nrmse: None, step_size: None }
    }
}

/// Sparse-layer rule: hard top-rho per column (support from the
/// back-projection, values by least squares on that support) or complex soft
/// thresholding at a fraction of the largest back-projected magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparseRule {
    Hard(usize),
    Soft(f64),
}

impl SparseRule {
    pub fn init(cfg: &ReconConfig) -> Self {
        match cfg.hard_sparsity_per_column {
            Some(rho) => SparseRule::Hard(rho),
            None => SparseRule::Soft(cfg.init_thresh_factor),
        }
    }

    pub fn iterate(cfg: &ReconConfig) -> Self {
        match cfg.hard_sparsity_per_column {
            Some(rho) => SparseRule::Hard(rho),
            None => SparseRule::Soft(cfg.iter_thresh_factor),
        }
    }
}

/// Spectral initialization of the L+S solver.
#[derive(Debug, Clone)]
pub struct LpsInit {
    pub sparse: ComplexMatrix,
    pub subspace: Subspace,
    pub rank: usize,
    /// Leading singular values of `X_0`.
    pub singular_values: Vec<f64>,
    /// Set when every measurement was zero; the other fields are then trivial.
    pub zero_data: bool,
}

#[derive(Debug, Clone)]
pub struct LrInit {
    pub subspace: Subspace,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub zero_data: bool,
}

fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

fn is_zero_column(v: &ComplexVector) -> bool {
    v.iter().all(|x| *x == czero())
}

/// `A s` for a column that is mostly zero.
pub(crate) fn apply_sparse(op: &dyn MeasurementOp, s: &ComplexVector) -> ComplexVector {
    let support: Vec<usize> = (0..s.len()).filter(|&i| s[i] != czero()).collect();
    if support.is_empty() {
        return ComplexVector::zeros(op.rows());
    }
    if support.len() * 8 < s.len() {
        let vals = ComplexVector::from_iterator(support.len(), support.iter().map(|&i| s[i]));
        op.columns(&support) * vals
    } else {
        op.apply(s)
    }
}

/// Back-projections `[A_1^H y_1, ..., A_q^H y_q]`.
pub fn back_projection(frames: &FrameSet) -> ComplexMatrix {
    let cols: Vec<ComplexVector> = frames.frames().par_iter().map(|f| f.op.adjoint(&f.y)).collect();
    ComplexMatrix::from_columns(&cols)
}

/// Per-frame least-squares coefficients `b_k = (A_k U)^+ (y_k - A_k s_k)`.
/// Rank-deficient frames fall back to the minimum-norm solution and are listed.
pub fn coefficients(
    frames: &FrameSet,
    u: &Subspace,
    sparse: Option<&ComplexMatrix>,
) -> Result<(ComplexMatrix, Vec<usize>)> {
    check_shapes(frames, u, sparse)?;
    let per: Vec<(ComplexVector, bool)> = frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let au = f.op.apply_mat(u.basis());
            let rhs = match sparse {
                Some(s) => &f.y - apply_sparse(f.op.as_ref(), &s.column(k).into_owned()),
                None => f.y.clone(),
            };
            solve_coeffs(&au, &rhs)
        })
        .collect::<Result<_>>()?;
    let mut b = ComplexMatrix::zeros(u.rank(), frames.q());
    let mut flagged = Vec::new();
    for (k, (bk, bad)) in per.into_iter().enumerate() {
        b.set_column(k, &bk);
        if bad {
            flagged.push(k);
        }
    }
    Ok((b, flagged))
}

pub(crate) fn solve_coeffs(au: &ComplexMatrix, rhs: &ComplexVector) -> Result<(ComplexVector, bool)> {
    if au.nrows() < au.ncols() {
        return Ok((ls_coeffs_min_norm(au, rhs)?, true));
    }
    match ls_coeffs(au, rhs) {
        Ok(b) => Ok((b, false)),
        Err(LpsError::RankDeficient { .. }) => Ok((ls_coeffs_min_norm(au, rhs)?, true)),
        Err(e) => Err(e),
    }
}

/// `f(S, U, B) = sum_k ||y_k - A_k (U b_k + s_k)||^2` for an arbitrary
/// (not necessarily orthonormal) `U`.
pub fn cost(frames: &FrameSet, u: &ComplexMatrix, b: &ComplexMatrix, s: Option<&ComplexMatrix>) -> f64 {
    frames
        .frames()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut x = u * b.column(k);
            if let Some(s) = s {
                x += s.column(k);
            }
            (&f.y - f.op.apply(&x)).norm_squared()
        })
        .sum()
}

/// Real gradient of `f` with respect to `U` (B, S fixed), packed as a complex
/// matrix: `2 sum_k A_k^H (A_k (U b_k + s_k) - y_k) b_k^H`. For any
/// direction `D`, `Re <G, D>` is the directional derivative of `f` along `D`.
pub fn gradient_u(frames: &FrameSet, u: &ComplexMatrix, b: &ComplexMatrix, s: Option<&ComplexMatrix>) -> ComplexMatrix {
    let terms: Vec<ComplexMatrix> = frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let bk = b.column(k).into_owned();
            let mut x = u * &bk;
            if let Some(s) = s {
                x += s.column(k);
            }
            let resid = f.op.apply(&x) - &f.y;
            f.op.adjoint(&resid) * bk.adjoint()
        })
        .collect();
    sum_in_order(terms, u.nrows(), u.ncols()) * C64::new(2.0, 0.0)
}

fn sum_in_order(terms: Vec<ComplexMatrix>, n: usize, r: usize) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(n, r);
    for t in &terms {
        g += t;
    }
    g
}

/// Largest singular value of an `n x r` matrix by power iteration on `G^H G`.
pub fn spectral_norm(g: &ComplexMatrix) -> f64 {
    let gram = g.adjoint() * g;
    let r = gram.nrows();
    let mut v = ComplexVector::from_fn(r, |i, _| C64::new(1.0 + i as f64 / r as f64, 0.0));
    let mut lambda = 0.0;
    for _ in 0..STEP_NORM_POWER_ITERS {
        let w = &gram * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        lambda = nw / v.norm();
        v = w / C64::new(nw, 0.0);
    }
    lambda.sqrt()
}

fn check_shapes(frames: &FrameSet, u: &Subspace, sparse: Option<&ComplexMatrix>) -> Result<()> {
    if u.ambient_dim() != frames.n() {
        return Err(dim_err(format!("basis has {} rows, frames have n = {}", u.ambient_dim(), frames.n())));
    }
    if let Some(s) = sparse {
        if s.shape() != (frames.n(), frames.q()) {
            return Err(dim_err(format!("sparse layer {:?}, expected {:?}", s.shape(), (frames.n(), frames.q()))));
        }
    }
    Ok(())
}

fn scatter(n: usize, support: &[usize], vals: &ComplexVector) -> ComplexVector {
    let mut s = ComplexVector::zeros(n);
    for (&i, v) in support.iter().zip(vals.iter()) {
        s[i] = *v;
    }
    s
}

/// Hard rule from a given score vector: support = top `rho` entries of
/// `score`, values = least squares of `r` on that support.
fn hard_sparse_column(op: &dyn MeasurementOp, r: &ComplexVector, score: &ComplexVector, rho: usize) -> Result<ComplexVector> {
    let support = top_k_support(score.as_slice(), rho);
    if support.is_empty() {
        return Ok(ComplexVector::zeros(score.len()));
    }
    let (vals, _) = solve_coeffs(&op.columns(&support), r)?;
    Ok(scatter(score.len(), &support, &vals))
}

/// Hard rule with greedy selection: one index at a time by normalized
/// correlation with the current residual, refitting on the support after
/// each pick. Cross-talk between large spikes cannot hide a later pick.
pub(crate) fn greedy_sparse_column(op: &dyn MeasurementOp, r: &ComplexVector, rho: usize) -> Result<ComplexVector> {
    let n = op.cols();
    let norms = op.column_norms();
    let mut support: Vec<usize> = Vec::with_capacity(rho);
    let mut vals = ComplexVector::zeros(0);
    let mut resid = r.clone();
    for _ in 0..rho.min(n) {
        let c = op.adjoint(&resid);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let v = c[j].norm() / norms[j];
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);
        let cols = op.columns(&support);
        vals = solve_coeffs(&cols, r)?.0;
        resid = r - cols * &vals;
    }
    Ok(scatter(n, &support, &vals))
}

/// Soft rule: complex shrinkage of every `c_k` at `factor * max_k ||c_k||_inf`.
fn soft_update(backproj: &[ComplexVector], factor: f64) -> Vec<ComplexVector> {
    let cmax = backproj.iter().fold(0.0f64, |m, c| c.iter().fold(m, |m, v| m.max(v.norm())));
    let level = factor * cmax;
    backproj.iter().map(|c| soft_threshold_vec(c, level)).collect()
}

fn initial_rank(x0: &ComplexMatrix, frames: &FrameSet, cfg: &ReconConfig) -> Result<(usize, ComplexMatrix, Vec<f64>)> {
    let (n, q) = x0.shape();
    let full = n.min(q);
    let r_big = rank_cap(n, q, frames.m_min(), cfg.rank_cap_divisor, cfg.rank_cap_rule);
    let want = cfg.rank_override.unwrap_or(r_big).max(r_big).min(full);
    let (u, values) = leading_svd(x0, want)?;
    let rank = match cfg.rank_override {
        Some(r) => r.min(full),
        None => rank_from_energy(&values, r_big, cfg.rank_energy_frac).min(full),
    };
    Ok((rank, u.columns(0, rank).into_owned(), values))
}

fn trivial_subspace(n: usize, r: usize) -> Subspace {
    Subspace::from_orthonormal(ComplexMatrix::identity(n, r.min(n)))
}

fn initial_sparse_columns(frames: &FrameSet, cfg: &ReconConfig) -> Result<Vec<ComplexVector>> {
    let fr = frames.frames();
    match SparseRule::init(cfg) {
        SparseRule::Hard(rho) => fr.par_iter().map(|f| greedy_sparse_column(f.op.as_ref(), &f.y, rho)).collect(),
        SparseRule::Soft(factor) => {
            let c: Vec<ComplexVector> = fr.par_iter().map(|f| f.op.adjoint(&f.y)).collect();
            Ok(soft_update(&c, factor))
        }
    }
}

/// Initial sparse layer alone (the first step of [`agm_lps_init`]).
pub fn initial_sparse(frames: &FrameSet, cfg: &ReconConfig) -> Result<ComplexMatrix> {
    cfg.validate()?;
    Ok(ComplexMatrix::from_columns(&initial_sparse_columns(frames, cfg)?))
}

/// Spectral initialization: threshold the back-projections for `S`, then take
/// the top-`r` left singular vectors of `X_0 = [A_k^H (y_k - A_k s_k)]`.
pub fn agm_lps_init(frames: &FrameSet, cfg: &ReconConfig) -> Result<LpsInit> {
    cfg.validate()?;
    let (n, q) = (frames.n(), frames.q());
    if frames.all_zero() {
        let rank = cfg.rank_override.unwrap_or(1).min(n.min(q));
        return Ok(LpsInit {
            sparse: ComplexMatrix::zeros(n, q),
            subspace: trivial_subspace(n, rank),
            rank,
            singular_values: vec![0.0; rank],
            zero_data: true,
        });
    }
    let fr = frames.frames();
    let s_cols = initial_sparse_columns(frames, cfg)?;
    let x0_cols: Vec<ComplexVector> = fr
        .par_iter()
        .zip(s_cols.par_iter())
        .map(|(f, s)| {
            if is_zero_column(s) {
                f.op.adjoint(&f.y)
            } else {
                f.op.adjoint(&(&f.y - apply_sparse(f.op.as_ref(), s)))
            }
        })
        .collect();
    let x0 = ComplexMatrix::from_columns(&x0_cols);
    let (rank, u, singular_values) = initial_rank(&x0, frames, cfg)?;
    Ok(LpsInit {
        sparse: ComplexMatrix::from_columns(&s_cols),
        subspace: Subspace::from_orthonormal(u),
        rank,
        singular_values,
        zero_data: false,
    })
}

/// LR-only spectral initialization on `X_0 = [A_k^H y_k]`.
pub fn agm_lr_init(frames: &FrameSet, cfg: &ReconConfig) -> Result<LrInit> {
    cfg.validate()?;
    let (n, q) = (frames.n(), frames.q());
    if frames.all_zero() {
        let rank = cfg.rank_override.unwrap_or(1).min(n.min(q));
        return Ok(LrInit {
            subspace: trivial_subspace(n, rank),
            rank,
            singular_values: vec![0.0; rank],
            zero_data: true,
        });
    }
    let x0 = back_projection(frames);
    let (rank, u, singular_values) = initial_rank(&x0, frames, cfg)?;
    Ok(LrInit { subspace: Subspace::from_orthonormal(u), rank, singular_values, zero_data: false })
}

struct LoopOutput {
    subspace: Subspace,
    coeffs: ComplexMatrix,
    sparse: Option<ComplexMatrix>,
    trace: IterationTrace,
}

struct FrameState {
    au: ComplexMatrix,
    b: ComplexVector,
    cost_before: Option<f64>,
    cost_after: f64,
    flagged: bool,
}

fn altgdmin(
    frames: &FrameSet,
    s_init: Option<&ComplexMatrix>,
    u_init: &Subspace,
    cfg: &ReconConfig,
    opts: &IterOptions,
    truth: Option<&ComplexMatrix>,
) -> Result<LoopOutput> {
    cfg.validate()?;
    check_shapes(frames, u_init, s_init)?;
    if let Some(t) = truth {
        if t.shape() != (frames.n(), frames.q()) {
            return Err(dim_err("truth shape differs from (n, q)"));
        }
    }
    if opts.tau == 0 {
        return Err(LpsError::InvalidArgument("iteration count must be at least 1".into()));
    }
    let with_sparse = s_init.is_some();
    let rule = SparseRule::iterate(cfg);
    let fr = frames.frames();
    let (n, q, r) = (frames.n(), frames.q(), u_init.rank());

    let mut u = u_init.clone();
    let mut s_cols: Vec<ComplexVector> = match s_init {
        Some(s) => (0..q).map(|k| s.column(k).into_owned()).collect(),
        None => vec![ComplexVector::zeros(n); q],
    };
    let mut a_s: Vec<ComplexVector> = fr
        .par_iter()
        .zip(s_cols.par_iter())
        .map(|(f, s)| apply_sparse(f.op.as_ref(), s))
        .collect();
    let mut b_prev: Option<ComplexMatrix> = None;
    let mut eta = opts.step_size.unwrap_or(0.0);
    let mut records = Vec::with_capacity(opts.tau);
    let mut flagged = std::collections::BTreeSet::new();
    let mut x_hist: Vec<ComplexMatrix> = Vec::with_capacity(2);
    let mut exit = ExitReason::MaxIterations;
    let mut b_mat = ComplexMatrix::zeros(r, q);
    let energy = frames.energy();
    let start = Instant::now();

    for t in 1..=opts.tau {
        // B update: exact per-frame least squares with U, S fixed.
        let states: Vec<FrameState> = fr
            .par_iter()
            .enumerate()
            .map(|(k, f)| {
                let au = f.op.apply_mat(u.basis());
                let rhs = &f.y - &a_s[k];
                let cost_before = b_prev.as_ref().map(|bp| (&rhs - &au * bp.column(k)).norm_squared());
                let (b, bad) = solve_coeffs(&au, &rhs)?;
                let cost_after = (&rhs - &au * &b).norm_squared();
                Ok(FrameState { au, b, cost_before, cost_after, flagged: bad })
            })
            .collect::<Result<_>>()?;
        for (k, st) in states.iter().enumerate() {
            b_mat.set_column(k, &st.b);
            if st.flagged && flagged.insert(k) {
                warn!("frame {k}: A_k U is rank deficient; using minimum-norm coefficients");
            }
        }
        let cost_before_b = if b_prev.is_some() {
            Some(states.iter().map(|s| s.cost_before.unwrap_or(0.0)).sum())
        } else {
            None
        };
        let cost_after_b: f64 = states.iter().map(|s| s.cost_after).sum();

        // S update from the back-projected low-rank residual.
        let lr_fit: Vec<ComplexVector> = states.iter().map(|st| &st.au * &st.b).collect();
        if with_sparse {
            let resid: Vec<ComplexVector> = fr.iter().zip(&lr_fit).map(|(f, l)| &f.y - l).collect();
            // Hard rule: two candidate supports, one from a unit gradient
            // step on s from its previous value, one picked greedily from the
            // low-rank residual; the column keeps whichever fits better. Soft
            // rule thresholds the plain back-projection of the residual.
            s_cols = match rule {
                SparseRule::Hard(rho) => fr
                    .par_iter()
                    .enumerate()
                    .map(|(k, f)| {
                        let score = &s_cols[k] + f.op.adjoint(&(&resid[k] - &a_s[k]));
                        let warm = hard_sparse_column(f.op.as_ref(), &resid[k], &score, rho)?;
                        let fresh = greedy_sparse_column(f.op.as_ref(), &resid[k], rho)?;
                        let misfit = |s: &ComplexVector| (&resid[k] - apply_sparse(f.op.as_ref(), s)).norm_squared();
                        Ok(if misfit(&fresh) < misfit(&warm) { fresh } else { warm })
                    })
                    .collect::<Result<_>>()?,
                SparseRule::Soft(factor) => {
                    let backproj: Vec<ComplexVector> =
                        fr.par_iter().zip(resid.par_iter()).map(|(f, rk)| f.op.adjoint(rk)).collect();
                    soft_update(&backproj, factor)
                }
            };
            a_s = fr
                .par_iter()
                .zip(s_cols.par_iter())
                .map(|(f, s)| apply_sparse(f.op.as_ref(), s))
                .collect();
        }

        let mut x_t = u.basis() * &b_mat;
        if with_sparse {
            for (k, s) in s_cols.iter().enumerate() {
                let mut col = x_t.column_mut(k);
                col += s;
            }
        }
        let residuals: Vec<ComplexVector> =
            fr.iter().enumerate().map(|(k, f)| &lr_fit[k] + &a_s[k] - &f.y).collect();
        let cost_now: f64 = residuals.iter().map(|v| v.norm_squared()).sum();
        if !cost_now.is_finite() {
            return Err(LpsError::Diverged { iteration: t });
        }
        let rc = x_hist.last().map(|prev| relative_change(&x_t, prev).unwrap_or(f64::INFINITY));
        let err = truth.map(|tr| nrmse(&x_t, tr)).transpose()?;
        records.push(IterationRecord {
            iteration: t,
            cost: cost_now,
            cost_before_b,
            cost_after_b,
            nrmse: err,
            relative_change: rc,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });

        let small = |rec: &IterationRecord| rec.relative_change.is_some_and(|v| v < cfg.exit_tol);
        let n_rec = records.len();
        if opts.early_exit && n_rec >= 2 && small(&records[n_rec - 1]) && small(&records[n_rec - 2]) {
            exit = ExitReason::SmallChange;
            break;
        }
        if let (Some(target), Some(e)) = (opts.stop_below_nrmse, err) {
            if e < target {
                exit = ExitReason::TargetReached;
                break;
            }
        }
        if x_hist.len() == 2 {
            x_hist.remove(0);
        }
        x_hist.push(x_t);
        b_prev = Some(b_mat.clone());
        if t == opts.tau {
            break;
        }

        // U update: one gradient step, then re-orthonormalize.
        let terms: Vec<ComplexMatrix> = fr
            .par_iter()
            .zip(residuals.par_iter())
            .enumerate()
            .map(|(k, (f, res))| f.op.adjoint(res) * b_mat.column(k).adjoint())
            .collect();
        let grad = sum_in_order(terms, n, r) * C64::new(2.0, 0.0);
        if t == 1 && opts.step_size.is_none() {
            // A start that already fits the data to round-off has a pure-noise
            // gradient; normalizing it would throw U away.
            let g = spectral_norm(&grad);
            let exact = cost_now <= EXACT_FIT_REL * EXACT_FIT_REL * energy;
            eta = if g > 0.0 && !exact { cfg.step_scale / g } else { 0.0 };
        }
        let stepped = u.basis() - &grad * C64::new(eta, 0.0);
        u = match thin_qr(&stepped) {
            Ok((q, _)) => q,
            Err(LpsError::RankDeficient { .. }) => return Err(LpsError::Diverged { iteration: t }),
            Err(e) => return Err(e),
        };
    }

    Ok(LoopOutput {
        subspace: u,
        coeffs: b_mat,
        sparse: with_sparse.then(|| ComplexMatrix::from_columns(&s_cols)),
        trace: IterationTrace { records, flagged_frames: flagged.into_iter().collect(), step_size: eta, exit },
    })
}

/// L+S iterations from `(S_init, U_init)`. The returned estimate has zero mean
/// and residual layers.
pub fn agm_lps_iterate(
    frames: &FrameSet,
    s_init: &ComplexMatrix,
    u_init: &Subspace,
    cfg: &ReconConfig,
    opts: &IterOptions,
    truth: Option<&ComplexMatrix>,
) -> Result<(LpSEstimate, IterationTrace)> {
    let out = altgdmin(frames, Some(s_init), u_init, cfg, opts, truth)?;
    let est = LpSEstimate::basic(out.subspace, out.coeffs, out.sparse.expect("sparse layer"))?;
    Ok((est, out.trace))
}

/// LR-only iterations from `U_init`; returns `(U, B, trace)`.
pub fn agm_lr_iterate(
    frames: &FrameSet,
    u_init: &Subspace,
    cfg: &ReconConfig,
    opts: &IterOptions,
    truth: Option<&ComplexMatrix>,
) -> Result<(Subspace, ComplexMatrix, IterationTrace)> {
    let out = altgdmin(frames, None, u_init, cfg, opts, truth)?;
    Ok((out.subspace, out.coeffs, out.trace))
}

/// Init followed by iterations, plus the full-init estimate `U_init B_init + S_init`.
#[derive(Debug, Clone)]
pub struct LpsRun {
    pub init: LpsInit,
    pub init_coeffs: ComplexMatrix,
    pub estimate: LpSEstimate,
    pub trace: IterationTrace,
    pub init_secs: f64,
    pub total_secs: f64,
}

impl LpsRun {
    pub fn init_estimate(&self) -> ComplexMatrix {
        self.init.subspace.basis() * &self.init_coeffs + &self.init.sparse
    }
}

pub fn agm_lps_basic(
    frames: &FrameSet,
    cfg: &ReconConfig,
    opts: &IterOptions,
    truth: Option<&ComplexMatrix>,
) -> Result<LpsRun> {
    let t0 = Instant::now();
    let init = agm_lps_init(frames, cfg)?;
    if init.zero_data {
        return Err(LpsError::ZeroData);
    }
    let (init_coeffs, _) = coefficients(frames, &init.subspace, Some(&init.sparse))?;
    let init_secs = t0.elapsed().as_secs_f64();
    let (estimate, trace) = agm_lps_iterate(frames, &init.sparse, &init.subspace, cfg, opts, truth)?;
    Ok(LpsRun { init, init_coeffs, estimate, trace, init_secs, total_secs: t0.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone)]
pub struct LrRun {
    pub init: LrInit,
    pub init_coeffs: ComplexMatrix,
    pub subspace: Subspace,
    pub coeffs: ComplexMatrix,
    pub trace: IterationTrace,
    pub init_secs: f64,
    pub total_secs: f64,
}

impl LrRun {
    pub fn estimate(&self) -> ComplexMatrix {
        self.subspace.basis() * &self.coeffs
    }

    pub fn init_estimate(&self) -> ComplexMatrix {
        self.init.subspace.basis() * &self.init_coeffs
    }
}

pub fn agm_lr_basic(
    frames: &FrameSet,
    cfg: &ReconConfig,
    opts: &IterOptions,
    truth: Option<&ComplexMatrix>,
) -> Result<LrRun> {
    let t0 = Instant::now();
    let init = agm_lr_init(frames, cfg)?;
    if init.zero_data {
        return Err(LpsError::ZeroData);
    }
    let (init_coeffs, _) = coefficients(frames, &init.subspace, None)?;
    let init_secs = t0.elapsed().as_secs_f64();
    let (subspace, coeffs, trace) = agm_lr_iterate(frames, &init.subspace, cfg, opts, truth)?;
    Ok(LrRun { init, init_coeffs, subspace, coeffs, trace, init_secs, total_secs: t0.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_lps_truth, SyntheticSpec};
    use crate::operators::make_gaussian_frames;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, m: usize, r: usize, rho: usize, a: f64, seed: u64) -> (FrameSet, crate::harness::LpsTruth) {
        let t = generate_lps_truth(&SyntheticSpec { q: n, ..SyntheticSpec::gaussian(n, m, r, rho, a, seed) }).unwrap();
        let fs = FrameSet::simulate(make_gaussian_frames(n, m, n, seed), &t.x).unwrap();
        (fs, t)
    }

    fn random_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (fs, t) = problem(20, 12, 3, 1, 2.0, 4);
        let u = random_c(&mut rng, 20, 3);
        let b = random_c(&mut rng, 3, 20);
        let g = gradient_u(&fs, &u, &b, Some(&t.sparse));
        for _ in 0..5 {
            let d = random_c(&mut rng, 20, 3);
            let h = 1e-5;
            let fd = (cost(&fs, &(&u + &d * C64::new(h, 0.0)), &b, Some(&t.sparse))
                - cost(&fs, &(&u - &d * C64::new(h, 0.0)), &b, Some(&t.sparse)))
                / (2.0 * h);
            let an = g.zip_map(&d, |x, y| (x.conj() * y).re).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_c(&mut rng, 30, 4);
        let want = g.clone().svd(false, false).singular_values.max();
        assert!((spectral_norm(&g) - want).abs() < 1e-8 * want);
        assert_eq!(spectral_norm(&ComplexMatrix::zeros(5, 2)), 0.0);
    }

    #[test]
    fn b_update_never_increases_cost() {
        let (fs, _) = problem(40, 30, 2, 2, 1.0, 3);
        let cfg = ReconConfig::simulation(2, 2);
        let opts = IterOptions { tau: 30, early_exit: false, stop_below_nrmse: None, step_size: None };
        let run = agm_lps_basic(&fs, &cfg, &opts, None).unwrap();
        for rec in &run.trace.records[1..] {
            let before = rec.cost_before_b.unwrap();
            assert!(rec.cost_after_b <= before * (1.0 + 1e-12) + 1e-300, "{rec:?}");
        }
        assert!(run.trace.records[0].cost_before_b.is_none());
    }

    #[test]
    fn exact_recovery_small_problem() {
        let (fs, t) = problem(50, 40, 2, 2, 1.0, 8);
        let cfg = ReconConfig::simulation(2, 2);
        let opts = IterOptions { tau: 400, early_exit: false, stop_below_nrmse: Some(1e-13), step_size: None };
        let run = agm_lps_basic(&fs, &cfg, &opts, Some(&t.x)).unwrap();
        assert!(run.trace.final_nrmse().unwrap() < 1e-12, "{:?}", run.trace.final_nrmse());
        assert_eq!(run.trace.exit, ExitReason::TargetReached);
        assert!(run.estimate.subspace.orthonormality_error() < 1e-10);
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let (fs, t) = problem(30, 24, 2, 1, 3.0, 5);
        let cfg = ReconConfig::simulation(1, 2);
        let opts = IterOptions { tau: 5, early_exit: false, stop_below_nrmse: None, step_size: None };
        let (est, trace) = agm_lps_iterate(&fs, &t.sparse, &t.subspace, &cfg, &opts, Some(&t.x)).unwrap();
        assert!(trace.records.iter().all(|r| r.nrmse.unwrap() < 1e-12));
        assert!((est.reconstruct() - &t.x).norm() < 1e-10 * t.x.norm());
    }

    #[test]
    fn lr_recovers_pure_low_rank() {
        let t = generate_lps_truth(&SyntheticSpec { rho: 0, ..SyntheticSpec::gaussian(40, 30, 2, 0, 1.0, 6) }).unwrap();
        let fs = FrameSet::simulate(make_gaussian_frames(40, 30, 40, 6), &t.x).unwrap();
        let cfg = ReconConfig { rank_override: Some(2), ..ReconConfig::default() };
        let run = agm_lr_basic(&fs, &cfg, &IterOptions::lr(&cfg, 300), Some(&t.x)).unwrap();
        assert!(run.trace.final_nrmse().unwrap() < 1e-10);
        assert_eq!(run.trace.iterations(), 300);
    }

    #[test]
    fn energy_rule_finds_rank_of_clean_data() {
        // m >> n so that A^T A is close to the identity; r_big = 3
        let spec = SyntheticSpec { q: 60, ..SyntheticSpec::gaussian(30, 600, 2, 0, 1.0, 1) };
        let t = generate_lps_truth(&spec).unwrap();
        let fs = FrameSet::simulate(make_gaussian_frames(30, 600, 60, 1), &t.x).unwrap();
        let init = agm_lr_init(&fs, &ReconConfig::default()).unwrap();
        assert_eq!(init.rank, 2);
        assert_eq!(init.subspace.rank(), 2);
        assert!(!init.zero_data);
    }

    #[test]
    fn greedy_selection_finds_planted_spikes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = crate::operators::DenseGaussianOp::sample(40, 100, 3, 0);
        for _ in 0..10 {
            let mut s = ComplexVector::zeros(100);
            let i = rng.random_range(0..50);
            let j = rng.random_range(50..100);
            s[i] = C64::new(50.0, 0.0);
            s[j] = C64::new(-30.0, 0.0);
            let y = op.apply(&s);
            let got = greedy_sparse_column(&op, &y, 2).unwrap();
            assert!((got - &s).norm() < 1e-10 * s.norm());
        }
    }

    #[test]
    fn zero_data_is_flagged() {
        let ops = make_gaussian_frames(10, 6, 8, 0);
        let fs = FrameSet::simulate(ops, &ComplexMatrix::zeros(10, 8)).unwrap();
        let init = agm_lps_init(&fs, &ReconConfig::default()).unwrap();
        assert!(init.zero_data);
        assert_eq!(init.sparse.norm(), 0.0);
        assert!(matches!(agm_lps_basic(&fs, &ReconConfig::default(), &IterOptions::lps(&ReconConfig::default()), None), Err(LpsError::ZeroData)));
    }

    #[test]
    fn early_exit_stops_on_small_changes() {
        let (fs, _) = problem(40, 30, 2, 2, 1.0, 11);
        let cfg = ReconConfig::simulation(2, 2);
        let run = agm_lps_basic(&fs, &cfg, &IterOptions::lps(&cfg), None).unwrap();
        assert_eq!(run.trace.exit, ExitReason::SmallChange);
        let recs = &run.trace.records;
        let last = recs.len() - 1;
        assert!(recs[last].relative_change.unwrap() < 0.09 && recs[last - 1].relative_change.unwrap() < 0.09);
    }

    #[test]
    fn rank_deficient_frames_use_min_norm() {
        // m = 1 < r = 2: every A_k U is rank deficient
        let (fs, _) = problem(12, 1, 2, 1, 1.0, 2);
        let u = Subspace::new(ComplexMatrix::identity(12, 2)).unwrap();
        let (b, flagged) = coefficients(&fs, &u, None).unwrap();
        assert_eq!(flagged.len(), 12);
        assert!(b.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }

    #[test]
    fn shape_errors() {
        let (fs, t) = problem(10, 8, 2, 1, 1.0, 2);
        let u = Subspace::new(ComplexMatrix::identity(9, 2)).unwrap();
        let cfg = ReconConfig::simulation(1, 2);
        let opts = IterOptions::lps(&cfg);
        assert!(agm_lps_iterate(&fs, &t.sparse, &u, &cfg, &opts, None).is_err());
        let bad_s = ComplexMatrix::zeros(10, 3);
        assert!(agm_lps_iterate(&fs, &bad_s, &t.subspace, &cfg, &opts, None).is_err());
        let zero = IterOptions { tau: 0, ..opts };
        assert!(agm_lps_iterate(&fs, &t.sparse, &t.subspace, &cfg, &zero, None).is_err());
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let (fs, t) = problem(30, 20, 2, 2, 1.0, 13);
        let cfg = ReconConfig::simulation(2, 2);
        let opts = IterOptions { tau: 20, early_exit: false, stop_below_nrmse: None, step_size: None };
        let a = agm_lps_basic(&fs, &cfg, &opts, Some(&t.x)).unwrap();
        let b = agm_lps_basic(&fs, &cfg, &opts, Some(&t.x)).unwrap();
        assert_eq!(a.estimate.reconstruct(), b.estimate.reconstruct());
        assert_eq!(a.trace.without_timing().records, b.trace.without_timing().records);
    }
}
