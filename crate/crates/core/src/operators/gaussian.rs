use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::MeasurementOp;
use crate::model::{ComplexMatrix, ComplexVector, C64};
use crate::rng::stream_rng;

/// Real `m x n` matrix with i.i.d. `N(0, 1) / sqrt(m)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussianOp {
    matrix: DMatrix<f64>,
}

impl DenseGaussianOp {
    /// Realization number `frame` of the family seeded by `seed`.
    pub fn sample(m: usize, n: usize, seed: u64, frame: u64) -> Self {
        let mut rng = stream_rng(seed, frame);
        let scale = 1.0 / (m as f64).sqrt();
        let matrix = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        Self { matrix }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

fn split(x: &ComplexMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (x.map(|v| v.re), x.map(|v| v.im))
}

fn join(re: DMatrix<f64>, im: DMatrix<f64>) -> ComplexMatrix {
    re.zip_map(&im, C64::new)
}

impl MeasurementOp for DenseGaussianOp {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &ComplexVector) -> ComplexVector {
        let re = &self.matrix * x.map(|v| v.re);
        let im = &self.matrix * x.map(|v| v.im);
        re.zip_map(&im, C64::new)
    }

    fn adjoint(&self, y: &ComplexVector) -> ComplexVector {
        let re = self.matrix.tr_mul(&y.map(|v| v.re));
        let im = self.matrix.tr_mul(&y.map(|v| v.im));
        re.zip_map(&im, C64::new)
    }

    fn apply_mat(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let (re, im) = split(x);
        join(&self.matrix * re, &self.matrix * im)
    }

    fn columns(&self, idx: &[usize]) -> ComplexMatrix {
        self.matrix.select_columns(idx).map(|v| C64::new(v, 0.0))
    }

    fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }
}

/// `q` independent Gaussian operators; frame `k` depends only on `(seed, k)`.
pub fn make_gaussian_frames(n: usize, m: usize, q: usize, seed: u64) -> Vec<Arc<dyn MeasurementOp>> {
    (0..q)
        .map(|k| Arc::new(DenseGaussianOp::sample(m, n, seed, k as u64)) as Arc<dyn MeasurementOp>)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::adjoint_mismatch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn apply_to_unit_vector_gives_column() {
        let op = DenseGaussianOp::sample(4, 4, 99, 0);
        let mut e1 = ComplexVector::zeros(4);
        e1[0] = C64::new(1.0, 0.0);
        let col = op.apply(&e1);
        for i in 0..4 {
            assert_eq!(col[i], C64::new(op.matrix()[(i, 0)], 0.0));
        }
        assert_eq!(op.columns(&[0]).column(0), col);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = DenseGaussianOp::sample(6, 5, 7, 3);
        let b = DenseGaussianOp::sample(6, 5, 7, 3);
        assert_eq!(a, b);
        let c = DenseGaussianOp::sample(6, 5, 7, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn column_norms_average_to_one() {
        // E||a_j||^2 = m * (1/m) = 1
        let (m, n, trials) = (60, 10, 1000);
        let mut acc = 0.0;
        for t in 0..trials {
            let op = DenseGaussianOp::sample(m, n, 5, t);
            acc += op.matrix().column_iter().map(|c| c.norm_squared()).sum::<f64>() / n as f64;
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean squared column norm {mean}");
    }

    #[test]
    fn adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = DenseGaussianOp::sample(12, 20, 1, 0);
        for _ in 0..20 {
            assert!(adjoint_mismatch(&op, &mut rng) < 1e-12);
        }
        let x = ComplexMatrix::from_fn(20, 3, |i, j| C64::new(i as f64, j as f64 - 1.0));
        let by_col = {
            let mut out = ComplexMatrix::zeros(12, 3);
            for j in 0..3 {
                out.set_column(j, &op.apply(&x.column(j).into_owned()));
            }
            out
        };
        assert!((op.apply_mat(&x) - by_col).norm() < 1e-12);
    }

    #[test]
    fn square_gaussian_is_injective() {
        for k in 0..5 {
            let op = DenseGaussianOp::sample(30, 30, 17, k);
            let s = op.matrix().clone().svd(false, false).singular_values;
            assert!(s.min() > 0.0);
        }
    }
}
