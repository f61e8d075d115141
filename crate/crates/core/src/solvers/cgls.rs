use crate::error::{dim_err, LpsError, Result};
use crate::model::{ComplexVector, C64};
use crate::operators::MeasurementOp;

/// Early-stop floor: stop once `||A^H r|| < CGLS_REL_TOL * ||A^H y||`.
pub const CGLS_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CglsResult {
    pub solution: ComplexVector,
    pub iterations_run: usize,
    pub final_residual_norm: f64,
    /// `||y - A w_t||` for `t = 0..=iterations_run`.
    pub residual_norms: Vec<f64>,
}

/// Conjugate gradient on the normal equations of `min_w ||y - A w||`, without
/// forming `A^H A`, warm-started at `w_init`.
pub fn cgls(
    op: &dyn MeasurementOp,
    y: &ComplexVector,
    w_init: &ComplexVector,
    max_iter: usize,
) -> Result<CglsResult> {
    if y.len() != op.rows() || w_init.len() != op.cols() {
        return Err(dim_err(format!(
            "cgls: operator {}x{}, y {}, w_init {}",
            op.rows(),
            op.cols(),
            y.len(),
            w_init.len()
        )));
    }
    if max_iter == 0 {
        return Err(LpsError::InvalidArgument("cgls: max_iter must be at least 1".into()));
    }

    let mut w = w_init.clone();
    let mut r = if w.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        y.clone()
    } else {
        y - op.apply(&w)
    };
    let mut s = op.adjoint(&r);
    let floor = CGLS_REL_TOL * op.adjoint(y).norm();
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    let mut residual_norms = vec![r.norm()];
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        if gamma.sqrt() <= floor || gamma == 0.0 {
            break;
        }
        let qv = op.apply(&p);
        let qn = qv.norm_squared();
        if qn == 0.0 {
            break;
        }
        let alpha = C64::new(gamma / qn, 0.0);
        w.axpy(alpha, &p, C64::new(1.0, 0.0));
        r.axpy(-alpha, &qv, C64::new(1.0, 0.0));
        s = op.adjoint(&r);
        let gamma_next = s.norm_squared();
        let beta = C64::new(gamma_next / gamma, 0.0);
        p = &s + &p * beta;
        gamma = gamma_next;
        iterations_run += 1;
        residual_norms.push(r.norm());
    }

    Ok(CglsResult {
        solution: w,
        iterations_run,
        final_residual_norm: *residual_norms.last().unwrap(),
        residual_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComplexMatrix;
    use crate::operators::DenseOp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_solves_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = DenseOp::new(ComplexMatrix::identity(5, 5));
        let y = ComplexVector::from_fn(5, |_, _| rand_c(&mut rng));
        let res = cgls(&op, &y, &ComplexVector::zeros(5), 1).unwrap();
        assert_eq!(res.iterations_run, 1);
        assert!((res.solution - &y).norm() < 1e-14);
    }

    fn normal_equation_solution(a: &ComplexMatrix, y: &ComplexVector) -> ComplexVector {
        let g = a.adjoint() * a;
        g.lu().solve(&a.ad_mul(y)).unwrap()
    }

    #[test]
    fn matches_dense_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ComplexMatrix::from_fn(20, 8, |_, _| rand_c(&mut rng));
        let y = ComplexVector::from_fn(20, |_, _| rand_c(&mut rng));
        let op = DenseOp::new(a.clone());
        let res = cgls(&op, &y, &ComplexVector::zeros(8), 8).unwrap();
        let want = normal_equation_solution(&a, &y);
        assert!((&res.solution - &want).norm() <= 1e-8 * want.norm());
        // residual never increases
        for w in res.residual_norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ComplexMatrix::from_fn(12, 4, |_, _| rand_c(&mut rng));
        let y = ComplexVector::from_fn(12, |_, _| rand_c(&mut rng));
        let exact = normal_equation_solution(&a, &y);
        let res = cgls(&DenseOp::new(a), &y, &exact, 5).unwrap();
        assert!((&res.solution - &exact).norm() <= 1e-10 * exact.norm());
    }

    #[test]
    fn rejects_bad_shapes() {
        let op = DenseOp::new(ComplexMatrix::identity(3, 2));
        assert!(cgls(&op, &ComplexVector::zeros(2), &ComplexVector::zeros(2), 1).is_err());
        assert!(cgls(&op, &ComplexVector::zeros(3), &ComplexVector::zeros(2), 0).is_err());
    }
}
