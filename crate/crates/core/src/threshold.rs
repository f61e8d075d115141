//! Thresholding operators used by the sparse-layer updates.

use crate::model::{ComplexMatrix, ComplexVector, C64};

/// Largest entry magnitude `||C||_inf` over the whole matrix.
pub fn max_abs(c: &ComplexMatrix) -> f64 {
    c.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Row indices of the `k` largest-magnitude entries of `col`; ties go to the
/// lower row index. Returned in increasing row order.
pub fn top_k_support(col: &[C64], k: usize) -> Vec<usize> {
    let k = k.min(col.len());
    let mut idx: Vec<usize> = (0..col.len()).collect();
    // stable sort keeps the lower index first among equal magnitudes
    idx.sort_by(|&a, &b| col[b].norm_sqr().total_cmp(&col[a].norm_sqr()));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Keeps the `k_per_column` largest-magnitude entries of every column.
pub fn hard_threshold_topk(c: &ComplexMatrix, k_per_column: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(c.nrows(), c.ncols());
    for j in 0..c.ncols() {
        let col = c.column(j);
        for i in top_k_support(col.as_slice(), k_per_column) {
            out[(i, j)] = col[i];
        }
    }
    out
}

#[inline]
pub(crate) fn shrink(v: C64, level: f64) -> C64 {
    let mag = v.norm();
    if mag <= level || mag == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        v * ((mag - level) / mag)
    }
}

/// Entrywise complex shrinkage `(c/|c|) max(|c| - level, 0)`; phase is kept.
pub fn soft_threshold(c: &ComplexMatrix, level: f64) -> ComplexMatrix {
    debug_assert!(level >= 0.0);
    c.map(|v| shrink(v, level))
}

pub(crate) fn soft_threshold_vec(c: &ComplexVector, level: f64) -> ComplexVector {
    c.map(|v| shrink(v, level))
}
