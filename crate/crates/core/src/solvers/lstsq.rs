use super::thin_qr;
use crate::error::{dim_err, Result};
use crate::model::{ComplexMatrix, ComplexVector, C64};

/// `argmin_b ||rhs - A b||` for full-column-rank `A`, through a thin QR
/// (`R b = Q^H rhs`); no normal-equation inverse is formed.
pub fn ls_coeffs(a: &ComplexMatrix, rhs: &ComplexVector) -> Result<ComplexVector> {
    if a.nrows() != rhs.len() {
        return Err(dim_err(format!("ls_coeffs: A has {} rows, rhs {}", a.nrows(), rhs.len())));
    }
    let (q, r) = thin_qr(a)?;
    let mut b = q.basis().ad_mul(rhs);
    let k = b.len();
    for i in (0..k).rev() {
        let mut acc = b[i];
        for j in i + 1..k {
            acc -= r[(i, j)] * b[j];
        }
        b[i] = acc / r[(i, i)];
    }
    debug_assert!({
        let res = a.ad_mul(&(rhs - a * &b)).norm();
        res <= 1e-9 * rhs.norm() * a.norm().max(1.0) || rhs.norm() == 0.0
    });
    Ok(b)
}

/// Minimum-norm least-squares solution via SVD; used when `A` is rank deficient.
pub fn ls_coeffs_min_norm(a: &ComplexMatrix, rhs: &ComplexVector) -> Result<ComplexVector> {
    if a.nrows() != rhs.len() {
        return Err(dim_err("ls_coeffs_min_norm: row count mismatch"));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut coeffs = u.ad_mul(rhs);
    for (c, &s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        *c = if s > eps { *c / C64::new(s, 0.0) } else { C64::new(0.0, 0.0) };
    }
    Ok(vt.ad_mul(&coeffs))
}
