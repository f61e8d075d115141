//! Per-frame linear measurement operators `A_k` and their adjoints.

mod fourier;
mod gaussian;
mod mask;

pub use fourier::{compose_multicoil, CoilMaps, FourierGrid, MaskedFourierCoilOp};
pub use gaussian::{make_gaussian_frames, DenseGaussianOp};
pub use mask::{make_pseudo_radial_masks, SamplingMask, GOLDEN_ANGLE};

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::model::{ComplexMatrix, ComplexVector, Frame, C64};

/// A linear map `C^n -> C^m` with its conjugate transpose.
///
/// Implementations panic on wrongly sized inputs; callers validate shapes up
/// front (see [`crate::model::FrameSet::new`]).
pub trait MeasurementOp: Send + Sync {
    /// `m_k`
    fn rows(&self) -> usize;
    /// `n`
    fn cols(&self) -> usize;
    fn apply(&self, x: &ComplexVector) -> ComplexVector;
    fn adjoint(&self, y: &ComplexVector) -> ComplexVector;

    /// Applies the operator to every column of `x`.
    fn apply_mat(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.rows(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.apply(&x.column(j).into_owned()));
        }
        out
    }

    /// `||A e_j||` for every `j`.
    fn column_norms(&self) -> Vec<f64> {
        let mut e = ComplexVector::zeros(self.cols());
        (0..self.cols())
            .map(|j| {
                e[j] = C64::new(1.0, 0.0);
                let v = self.apply(&e).norm();
                e[j] = C64::new(0.0, 0.0);
                v
            })
            .collect()
    }

    /// The columns `A e_j` for `j` in `idx`.
    fn columns(&self, idx: &[usize]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.rows(), idx.len());
        let mut e = ComplexVector::zeros(self.cols());
        for (c, &j) in idx.iter().enumerate() {
            e[j] = C64::new(1.0, 0.0);
            out.set_column(c, &self.apply(&e));
            e[j] = C64::new(0.0, 0.0);
        }
        out
    }
}

/// Dense complex matrix operator. Mostly useful for oracles and small problems.
#[derive(Debug, Clone)]
pub struct DenseOp {
    matrix: ComplexMatrix,
}

impl DenseOp {
    pub fn new(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Materializes any operator column by column.
    pub fn materialize(op: &dyn MeasurementOp) -> Self {
        let idx: Vec<usize> = (0..op.cols()).collect();
        Self { matrix: op.columns(&idx) }
    }
}

impl MeasurementOp for DenseOp {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &ComplexVector) -> ComplexVector {
        &self.matrix * x
    }

    fn adjoint(&self, y: &ComplexVector) -> ComplexVector {
        self.matrix.ad_mul(y)
    }

    fn apply_mat(&self, x: &ComplexMatrix) -> ComplexMatrix {
        &self.matrix * x
    }

    fn columns(&self, idx: &[usize]) -> ComplexMatrix {
        self.matrix.select_columns(idx)
    }

    fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }
}

/// The vertical stack `[A_1; ...; A_q]` of a window of frames, applied
/// matrix-free. The adjoint accumulates `sum_k A_k^H y_k` in frame order.
pub struct StackedOp<'a> {
    frames: &'a [Frame],
    offsets: Vec<usize>,
}

impl<'a> StackedOp<'a> {
    pub fn new(frames: &'a [Frame]) -> Self {
        let mut offsets = Vec::with_capacity(frames.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for f in frames {
            acc += f.op.rows();
            offsets.push(acc);
        }
        Self { frames, offsets }
    }

    /// Concatenated measurements `[y_1; ...; y_q]`.
    pub fn stacked_measurements(&self) -> ComplexVector {
        let mut y = ComplexVector::zeros(self.rows());
        for (k, f) in self.frames.iter().enumerate() {
            y.rows_mut(self.offsets[k], f.y.len()).copy_from(&f.y);
        }
        y
    }
}

impl MeasurementOp for StackedOp<'_> {
    fn rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn cols(&self) -> usize {
        self.frames.first().map_or(0, |f| f.op.cols())
    }

    fn apply(&self, x: &ComplexVector) -> ComplexVector {
        let parts: Vec<ComplexVector> = self.frames.par_iter().map(|f| f.op.apply(x)).collect();
        let mut y = ComplexVector::zeros(self.rows());
        for (k, p) in parts.iter().enumerate() {
            y.rows_mut(self.offsets[k], p.len()).copy_from(p);
        }
        y
    }

    fn adjoint(&self, y: &ComplexVector) -> ComplexVector {
        let parts: Vec<ComplexVector> = self
            .frames
            .par_iter()
            .enumerate()
            .map(|(k, f)| {
                let seg = y.rows(self.offsets[k], f.op.rows()).into_owned();
                f.op.adjoint(&seg)
            })
            .collect();
        let mut acc = ComplexVector::zeros(self.cols());
        for p in &parts {
            acc += p;
        }
        acc
    }
}

/// Multi-coil pseudo-radial Fourier operators for `q` frames sharing `coils`.
pub fn make_radial_coil_frames(
    coils: &Arc<CoilMaps>,
    q: usize,
    lines_per_frame: usize,
    seed: u64,
) -> crate::error::Result<Vec<Arc<dyn MeasurementOp>>> {
    let (nx, ny) = coils.shape();
    make_pseudo_radial_masks(nx, ny, q, lines_per_frame, seed)?
        .into_iter()
        .map(|mask| Ok(Arc::new(compose_multicoil(mask, coils)?) as Arc<dyn MeasurementOp>))
        .collect()
}

fn random_complex_vector<R: Rng>(rng: &mut R, len: usize) -> ComplexVector {
    ComplexVector::from_fn(len, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Relative inner-product mismatch `|<Ax, y> - <x, A^H y>| / (||Ax|| ||y||)`
/// for one random pair `(x, y)`.
pub fn adjoint_mismatch<R: Rng>(op: &dyn MeasurementOp, rng: &mut R) -> f64 {
    let x = random_complex_vector(rng, op.cols());
    let y = random_complex_vector(rng, op.rows());
    let ax = op.apply(&x);
    let ahy = op.adjoint(&y);
    let lhs = ax.dotc(&y);
    let rhs = x.dotc(&ahy);
    let scale = ax.norm() * y.norm();
    if scale == 0.0 {
        return (lhs - rhs).norm();
    }
    (lhs - rhs).norm() / scale
}

/// Largest singular value of `op` by power iteration on `A^H A`.
pub fn estimate_operator_norm<R: Rng>(op: &dyn MeasurementOp, iters: usize, rng: &mut R) -> f64 {
    let mut v = random_complex_vector(rng, op.cols());
    let mut sigma = 0.0;
    for _ in 0..iters {
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        v /= C64::new(nv, 0.0);
        let av = op.apply(&v);
        sigma = av.norm();
        v = op.adjoint(&av);
    }
    sigma
}
