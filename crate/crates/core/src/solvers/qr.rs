use crate::error::{dim_err, LpsError, Result};
use crate::model::{ComplexMatrix, Subspace, C64};

/// Thin QR by Gram-Schmidt with one reorthogonalization pass. `R` has a real
/// nonnegative diagonal, which fixes the otherwise arbitrary column phases.
pub fn thin_qr(m: &ComplexMatrix) -> Result<(Subspace, ComplexMatrix)> {
    let (n, r) = m.shape();
    if r == 0 || n < r {
        return Err(dim_err(format!("thin_qr needs n >= r >= 1, got {n}x{r}")));
    }
    let floor = 1e-12 * m.norm();
    let mut q = ComplexMatrix::zeros(n, r);
    let mut rr = ComplexMatrix::zeros(r, r);
    for j in 0..r {
        let mut v = m.column(j).into_owned();
        for _pass in 0..2 {
            if j > 0 {
                let basis = q.columns(0, j);
                let h = basis.ad_mul(&v);
                v -= basis * &h;
                let mut col = rr.view_mut((0, j), (j, 1));
                col += &h;
            }
        }
        let norm = v.norm();
        if norm <= floor || norm == 0.0 {
            return Err(LpsError::RankDeficient { column: j });
        }
        rr[(j, j)] = C64::new(norm, 0.0);
        q.set_column(j, &(v / C64::new(norm, 0.0)));
    }
    Ok((Subspace::from_orthonormal(q), rr))
}
