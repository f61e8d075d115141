use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LpsError, Result};
use crate::model::{ComplexMatrix, Subspace, C64};
use crate::rng::stream_rng;

/// Above this `min(n, q)` the leading pairs come from block power iteration.
pub const FULL_SVD_MAX_DIM: usize = 512;
const OVERSAMPLING: usize = 8;
const POWER_ITERS: usize = 60;
const POWER_TOL: f64 = 1e-10;

fn orthonormalize(m: ComplexMatrix) -> ComplexMatrix {
    m.qr().q()
}

/// Leading `k` left singular vectors (`n x k`) and values, nonincreasing.
pub fn leading_svd(m: &ComplexMatrix, k: usize) -> Result<(ComplexMatrix, Vec<f64>)> {
    let (n, q) = m.shape();
    if k == 0 || k > n.min(q) {
        return Err(LpsError::InvalidArgument(format!(
            "requested {k} singular pairs of a {n}x{q} matrix"
        )));
    }
    if n.min(q) <= FULL_SVD_MAX_DIM {
        full_svd(m, k)
    } else {
        block_power_svd(m, k)
    }
}

fn full_svd(m: &ComplexMatrix, k: usize) -> Result<(ComplexMatrix, Vec<f64>)> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    order.truncate(k);
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((u.select_columns(&order), values))
}

fn block_power_svd(m: &ComplexMatrix, k: usize) -> Result<(ComplexMatrix, Vec<f64>)> {
    let (n, q) = m.shape();
    let p = (k + OVERSAMPLING).min(n.min(q));
    let mut rng = stream_rng(0x5eed_5eed, (n as u64) << 32 | q as u64);
    let omega = DMatrix::from_fn(q, p, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let mut basis = orthonormalize(m * omega);
    for _ in 0..POWER_ITERS {
        let next = orthonormalize(m * (m.ad_mul(&basis)));
        let change = (&next - &basis * basis.ad_mul(&next)).norm();
        basis = next;
        if change < POWER_TOL {
            break;
        }
    }
    let small = basis.ad_mul(m);
    let (u_small, values) = full_svd(&small, k)?;
    Ok((&basis * u_small, values))
}

/// Top-`r` left singular subspace and its singular values.
pub fn top_r_svd(m: &ComplexMatrix, r: usize) -> Result<(Subspace, Vec<f64>)> {
    let (u, s) = leading_svd(m, r)?;
    Ok((Subspace::from_orthonormal(u), s))
}
