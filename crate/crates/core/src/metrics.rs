//! Error metrics between estimates and ground truth.

use crate::error::{dim_err, LpsError, Result};
use crate::model::{ComplexMatrix, ComplexVector, Subspace, C64};

fn same_shape(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `||truth - estimate||_F / ||truth||_F`
pub fn nrmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    same_shape(estimate, truth)?;
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(LpsError::ZeroNorm("truth"));
    }
    Ok((truth - estimate).norm() / denom)
}

/// Squared distance from `truth` to the complex line spanned by `estimate`.
pub(crate) fn scaled_column_dist2<'a>(
    truth: impl Iterator<Item = &'a C64> + Clone,
    estimate: impl Iterator<Item = &'a C64> + Clone,
) -> Option<f64> {
    let est_norm2: f64 = estimate.clone().map(|v| v.norm_sqr()).sum();
    if est_norm2 == 0.0 {
        return None;
    }
    let inner: C64 = estimate.clone().zip(truth.clone()).map(|(e, t)| e.conj() * t).sum();
    let scale = inner / est_norm2;
    Some(truth.zip(estimate).map(|(t, e)| (t - e * scale).norm_sqr()).sum())
}

/// Normalized scale-invariant error: every estimate column is rescaled by its
/// best complex scalar before comparison,
/// `sum_k ||x_k - c_k xhat_k||^2 / ||X||_F^2`.
pub fn scale_invariant_error(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    same_shape(estimate, truth)?;
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(LpsError::ZeroNorm("truth"));
    }
    let mut num = 0.0;
    for k in 0..truth.ncols() {
        let t = truth.column(k);
        let e = estimate.column(k);
        num += scaled_column_dist2(t.iter(), e.iter()).ok_or(LpsError::ZeroColumn(k))?;
    }
    Ok(num / denom)
}

/// Scale-invariant error of a single frame, `||x - c xhat||^2 / ||x||^2`.
pub fn frame_error(estimate: &ComplexVector, truth: &ComplexVector) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(dim_err(format!("frame lengths {} vs {}", estimate.len(), truth.len())));
    }
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(LpsError::ZeroNorm("truth"));
    }
    let num = scaled_column_dist2(truth.iter(), estimate.iter()).ok_or(LpsError::ZeroColumn(0))?;
    Ok(num / denom)
}

/// `||(I - U1 U1^H) U2||_F`, in `[0, sqrt(r)]`.
pub fn subspace_distance(u1: &Subspace, u2: &Subspace) -> Result<f64> {
    if u1.ambient_dim() != u2.ambient_dim() || u1.rank() != u2.rank() {
        return Err(dim_err(format!(
            "subspaces {}x{} and {}x{}",
            u1.ambient_dim(),
            u1.rank(),
            u2.ambient_dim(),
            u2.rank()
        )));
    }
    let a = u1.basis();
    let b = u2.basis();
    let proj = a * (a.adjoint() * b);
    Ok((b - proj).norm())
}

/// Squared relative Frobenius change `||current - previous||_F^2 / ||previous||_F^2`.
pub fn relative_change(current: &ComplexMatrix, previous: &ComplexMatrix) -> Result<f64> {
    same_shape(current, previous)?;
    let denom = previous.norm_squared();
    if denom == 0.0 {
        return Err(LpsError::ZeroNorm("previous"));
    }
    Ok((current - previous).norm_squared() / denom)
}
