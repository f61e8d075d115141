use crate::error::{dim_err, LpsError, Result};
use crate::model::{ComplexMatrix, Subspace};

/// Incoherence parameters of `L = U B`:
/// `mu_left = max_j ||row_j(U)|| sqrt(n / r)` and
/// `mu_right = max_k ||b_k|| sqrt(q) / (sqrt(r) sigma_max)`.
pub fn incoherence_mu(subspace: &Subspace, coeffs: &ComplexMatrix, sigma_max: f64) -> Result<(f64, f64)> {
    let u = subspace.basis();
    let (n, r) = u.shape();
    if coeffs.nrows() != r {
        return Err(dim_err(format!("coefficients have {} rows, basis rank is {r}", coeffs.nrows())));
    }
    if !(sigma_max.is_finite() && sigma_max > 0.0) {
        return Err(LpsError::InvalidArgument(format!("sigma_max must be positive, got {sigma_max}")));
    }
    let q = coeffs.ncols();
    let row_max = u.row_iter().map(|row| row.norm()).fold(0.0, f64::max);
    let col_max = coeffs.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mu_left = row_max * (n as f64 / r as f64).sqrt();
    let mu_right = col_max * (q as f64).sqrt() / ((r as f64).sqrt() * sigma_max);
    Ok((mu_left, mu_right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::C64;
    use std::f64::consts::TAU;

    #[test]
    fn identity_columns_are_maximally_coherent() {
        let (n, r) = (16, 3);
        let u = Subspace::new(ComplexMatrix::identity(n, r)).unwrap();
        let b = ComplexMatrix::from_element(r, 5, C64::new(1.0, 0.0));
        let (mu_l, _) = incoherence_mu(&u, &b, 1.0).unwrap();
        assert!((mu_l - (n as f64 / r as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn flat_dft_rows_give_unit_mu() {
        let (n, r) = (12, 4);
        let dft = ComplexMatrix::from_fn(n, r, |j, k| C64::from_polar(1.0 / (n as f64).sqrt(), TAU * (j * k) as f64 / n as f64));
        let u = Subspace::new(dft).unwrap();
        let b = ComplexMatrix::from_element(r, 3, C64::new(1.0, 0.0));
        let (mu_l, _) = incoherence_mu(&u, &b, 1.0).unwrap();
        assert!((mu_l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_norm_columns_give_unit_mu_right() {
        // r = 1, |b_k| = sigma / sqrt(q) so that sum_k |b_k|^2 = sigma^2
        let (q, sigma) = (9, 3.0);
        let b = ComplexMatrix::from_fn(1, q, |_, k| C64::from_polar(sigma / (q as f64).sqrt(), k as f64));
        let u = Subspace::new(ComplexMatrix::from_element(4, 1, C64::new(0.5, 0.0))).unwrap();
        let (_, mu_r) = incoherence_mu(&u, &b, sigma).unwrap();
        assert!((mu_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = Subspace::new(ComplexMatrix::identity(4, 2)).unwrap();
        assert!(incoherence_mu(&u, &ComplexMatrix::zeros(3, 2), 1.0).is_err());
        assert!(incoherence_mu(&u, &ComplexMatrix::zeros(2, 2), 0.0).is_err());
    }
}
