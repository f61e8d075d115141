//! Shared domain types: complex matrices, orthonormal subspaces, the factored
//! three-level estimate, reconstruction knobs and per-window frame sets.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LpsError, Result};
use crate::operators::MeasurementOp;

pub type C64 = Complex64;
/// Column-major complex matrix. Column `k` is frame `k`.
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Orthonormality tolerance enforced by [`Subspace::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Checks the construction invariants of a [`ComplexMatrix`]: nonempty and finite.
pub fn checked_matrix(m: ComplexMatrix) -> Result<ComplexMatrix> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(dim_err(format!("empty matrix {}x{}", m.nrows(), m.ncols())));
    }
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(LpsError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(m)
}

/// Lifts a real matrix into the complex pipeline.
pub fn complexify(m: &DMatrix<f64>) -> ComplexMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// An `n x r` basis with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: ComplexMatrix,
}

impl Subspace {
    pub fn new(basis: ComplexMatrix) -> Result<Self> {
        let basis = checked_matrix(basis)?;
        if basis.ncols() > basis.nrows() {
            return Err(dim_err(format!(
                "subspace rank {} exceeds ambient dimension {}",
                basis.ncols(),
                basis.nrows()
            )));
        }
        let s = Self { basis };
        let err = s.orthonormality_error();
        if err > ORTHONORMAL_TOL {
            return Err(LpsError::InvalidArgument(format!(
                "basis is not orthonormal (||U^H U - I||_F = {err:.3e})"
            )));
        }
        Ok(s)
    }

    /// Wraps a basis already known to be orthonormal (QR/SVD output).
    pub(crate) fn from_orthonormal(basis: ComplexMatrix) -> Self {
        debug_assert!(
            {
                let s = Self { basis: basis.clone() };
                s.orthonormality_error() < 1e-8
            },
            "basis handed to from_orthonormal is not orthonormal"
        );
        Self { basis }
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn into_basis(self) -> ComplexMatrix {
        self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `||U^H U - I||_F`
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.adjoint() * &self.basis;
        let r = g.nrows();
        (g - ComplexMatrix::identity(r, r)).norm()
    }
}

/// Factored estimate of the three-level model
/// `z_k = mean + U b_k + s_k + e_k`.
#[derive(Debug, Clone)]
pub struct LpSEstimate {
    pub mean: ComplexVector,
    pub subspace: Subspace,
    /// `r x q`
    pub coeffs: ComplexMatrix,
    /// `n x q`
    pub sparse: ComplexMatrix,
    /// `n x q`
    pub residual: ComplexMatrix,
}

impl LpSEstimate {
    pub fn new(
        mean: ComplexVector,
        subspace: Subspace,
        coeffs: ComplexMatrix,
        sparse: ComplexMatrix,
        residual: ComplexMatrix,
    ) -> Result<Self> {
        let n = subspace.ambient_dim();
        let r = subspace.rank();
        let q = coeffs.ncols();
        if mean.len() != n
            || coeffs.nrows() != r
            || sparse.shape() != (n, q)
            || residual.shape() != (n, q)
        {
            return Err(dim_err(format!(
                "estimate layers inconsistent: mean {}, U {}x{}, B {:?}, S {:?}, E {:?}",
                mean.len(),
                n,
                r,
                coeffs.shape(),
                sparse.shape(),
                residual.shape()
            )));
        }
        Ok(Self { mean, subspace, coeffs, sparse, residual })
    }

    /// Estimate with zero mean and zero residual layers (basic L+S model).
    pub fn basic(subspace: Subspace, coeffs: ComplexMatrix, sparse: ComplexMatrix) -> Result<Self> {
        let n = subspace.ambient_dim();
        let q = coeffs.ncols();
        Self::new(
            ComplexVector::zeros(n),
            subspace,
            coeffs,
            sparse,
            ComplexMatrix::zeros(n, q),
        )
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn q(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn low_rank(&self) -> ComplexMatrix {
        self.subspace.basis() * &self.coeffs
    }

    /// Frame `k` of the reconstruction.
    pub fn frame(&self, k: usize) -> ComplexVector {
        let mut z = &self.mean + self.subspace.basis() * self.coeffs.column(k);
        z += self.sparse.column(k);
        z += self.residual.column(k);
        z
    }

    /// All frames as an `n x q` matrix.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut z = self.low_rank() + &self.sparse + &self.residual;
        for mut col in z.column_iter_mut() {
            col += &self.mean;
        }
        z
    }
}

/// How `r_big` in the rank rule is capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RankCapRule {
    /// `min(n, q, min_k m_k) / divisor`
    #[default]
    WithMeasurements,
    /// `min(n, q) / divisor`
    SizeOnly,
}

/// Every scalar knob of the reconstruction algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Numerator of the step size `eta = step_scale / ||grad||`.
    pub step_scale: f64,
    pub init_thresh_factor: f64,
    pub iter_thresh_factor: f64,
    pub tau_init: usize,
    pub tau_warm: usize,
    pub exit_tol: f64,
    /// Apply the two-consecutive-small-changes exit rule in the L+S iterations.
    pub early_exit: bool,
    /// Same rule for the LR-only iterations (off: run exactly tau).
    pub lr_early_exit: bool,
    pub rank_energy_frac: f64,
    pub rank_cap_divisor: usize,
    pub rank_cap_rule: RankCapRule,
    pub mean_cgls_iters_cold: usize,
    pub mean_cgls_iters_warm: usize,
    pub residual_cgls_iters: usize,
    /// Mini-batch size.
    pub alpha: usize,
    /// Keep the top-rho entries per column instead of soft thresholding.
    pub hard_sparsity_per_column: Option<usize>,
    pub rank_override: Option<usize>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            step_scale: 0.14,
            init_thresh_factor: 0.07,
            iter_thresh_factor: 0.04,
            tau_init: 50,
            tau_warm: 15,
            exit_tol: 0.09,
            early_exit: true,
            lr_early_exit: false,
            rank_energy_frac: 0.85,
            rank_cap_divisor: 10,
            rank_cap_rule: RankCapRule::WithMeasurements,
            mean_cgls_iters_cold: 10,
            mean_cgls_iters_warm: 2,
            residual_cgls_iters: 3,
            alpha: 32,
            hard_sparsity_per_column: None,
            rank_override: None,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(LpsError::InvalidConfig(what.to_string()));
        for (name, v) in [
            ("step_scale", self.step_scale),
            ("init_thresh_factor", self.init_thresh_factor),
            ("iter_thresh_factor", self.iter_thresh_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be a positive real, got {v}"));
            }
        }
        if !(self.exit_tol > 0.0 && self.exit_tol < 1.0) {
            return bad("exit_tol must lie in (0, 1)");
        }
        if !(self.rank_energy_frac > 0.0 && self.rank_energy_frac < 1.0) {
            return bad("rank_energy_frac must lie in (0, 1)");
        }
        for (name, v) in [
            ("tau_init", self.tau_init),
            ("tau_warm", self.tau_warm),
            ("rank_cap_divisor", self.rank_cap_divisor),
            ("mean_cgls_iters_cold", self.mean_cgls_iters_cold),
            ("mean_cgls_iters_warm", self.mean_cgls_iters_warm),
            ("residual_cgls_iters", self.residual_cgls_iters),
            ("alpha", self.alpha),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be at least 1"));
            }
        }
        if self.hard_sparsity_per_column == Some(0) {
            return bad("hard_sparsity_per_column must be at least 1");
        }
        if self.rank_override == Some(0) {
            return bad("rank_override must be at least 1");
        }
        Ok(())
    }

    /// Simulation-mode preset: hard top-rho thresholding with known rank.
    pub fn simulation(rho: usize, rank: usize) -> Self {
        Self {
            hard_sparsity_per_column: Some(rho),
            rank_override: Some(rank),
            ..Self::default()
        }
    }
}

/// One frame: measurement vector plus its operator.
#[derive(Clone)]
pub struct Frame {
    pub op: Arc<dyn MeasurementOp>,
    pub y: ComplexVector,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("rows", &self.op.rows())
            .field("cols", &self.op.cols())
            .finish()
    }
}

/// Measurements and operators for a window of frames.
#[derive(Clone, Debug, Default)]
pub struct FrameSet {
    frames: Vec<Frame>,
}

impl FrameSet {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(LpsError::InvalidArgument("frame set is empty".into()));
        };
        let n = first.op.cols();
        for (k, f) in frames.iter().enumerate() {
            if f.op.cols() != n {
                return Err(dim_err(format!(
                    "frame {k} operator has {} columns, expected {n}",
                    f.op.cols()
                )));
            }
            if f.y.len() != f.op.rows() {
                return Err(dim_err(format!(
                    "frame {k}: measurement length {} but operator has {} rows",
                    f.y.len(),
                    f.op.rows()
                )));
            }
        }
        Ok(Self { frames })
    }

    /// Simulates `y_k = A_k x_k` for every column of `truth`.
    pub fn simulate(ops: Vec<Arc<dyn MeasurementOp>>, truth: &ComplexMatrix) -> Result<Self> {
        if ops.len() != truth.ncols() {
            return Err(dim_err(format!(
                "{} operators for {} frames",
                ops.len(),
                truth.ncols()
            )));
        }
        let frames = ops
            .into_iter()
            .enumerate()
            .map(|(k, op)| {
                if op.cols() != truth.nrows() {
                    return Err(dim_err("operator width does not match frame length"));
                }
                let y = op.apply(&truth.column(k).into_owned());
                Ok(Frame { op, y })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Frame {
        &self.frames[k]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Image dimension `n`.
    pub fn n(&self) -> usize {
        self.frames.first().map_or(0, |f| f.op.cols())
    }

    pub fn q(&self) -> usize {
        self.frames.len()
    }

    pub fn m_min(&self) -> usize {
        self.frames.iter().map(|f| f.op.rows()).min().unwrap_or(0)
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        Self::new(self.frames[range].to_vec())
    }

    /// Same operators, new measurements.
    pub fn with_measurements(&self, ys: Vec<ComplexVector>) -> Result<Self> {
        if ys.len() != self.frames.len() {
            return Err(dim_err("measurement count differs from frame count"));
        }
        let frames = self
            .frames
            .iter()
            .zip(ys)
            .map(|(f, y)| Frame { op: Arc::clone(&f.op), y })
            .collect();
        Self::new(frames)
    }

    /// `y_k - A_k v` for a common image `v`.
    pub fn subtract_common(&self, v: &ComplexVector) -> Result<Self> {
        let ys = self.frames.iter().map(|f| &f.y - f.op.apply(v)).collect();
        self.with_measurements(ys)
    }

    /// `true` if every measurement is exactly zero.
    pub fn all_zero(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.y.iter().all(|v| v.re == 0.0 && v.im == 0.0))
    }

    /// `sum_k ||y_k||^2`
    pub fn energy(&self) -> f64 {
        self.frames.iter().map(|f| f.y.norm_squared()).sum()
    }
}
