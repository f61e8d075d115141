use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{MeasurementOp, SamplingMask};
use crate::error::{dim_err, Result};
use crate::model::{ComplexVector, C64};

/// Unitary 2-D DFT on a row-major `n_x x n_y` grid (index `x * n_y + y`).
pub struct FourierGrid {
    nx: usize,
    ny: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourierGrid({}x{})", self.nx, self.ny)
    }
}

impl FourierGrid {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_rows: planner.plan_fft_forward(ny),
            fwd_cols: planner.plan_fft_forward(nx),
            inv_rows: planner.plan_fft_inverse(ny),
            inv_cols: planner.plan_fft_inverse(nx),
            scale: 1.0 / ((nx * ny) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, buf: &mut [C64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        rows.process(buf);
        let mut t = vec![C64::new(0.0, 0.0); nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                t[y * nx + x] = buf[x * ny + y];
            }
        }
        cols.process(&mut t);
        for x in 0..nx {
            for y in 0..ny {
                buf[x * ny + y] = t[y * nx + x] * self.scale;
            }
        }
    }

    /// In-place unitary forward transform.
    pub fn forward(&self, buf: &mut [C64]) {
        self.transform(buf, self.fwd_rows.as_ref(), self.fwd_cols.as_ref());
    }

    /// In-place unitary inverse transform.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.transform(buf, self.inv_rows.as_ref(), self.inv_cols.as_ref());
    }

    /// FFT-order linear index of a centered k-space coordinate.
    pub fn fft_index(&self, (kx, ky): (u32, u32)) -> usize {
        let fx = (kx as usize + self.nx - self.nx / 2) % self.nx;
        let fy = (ky as usize + self.ny - self.ny / 2) % self.ny;
        fx * self.ny + fy
    }
}

/// Coil sensitivity maps on a shared grid.
#[derive(Debug, Clone)]
pub struct CoilMaps {
    grid: Arc<FourierGrid>,
    maps: Vec<ComplexVector>,
}

impl CoilMaps {
    pub fn new(shape: (usize, usize), maps: Vec<ComplexVector>) -> Result<Self> {
        let n = shape.0 * shape.1;
        if n == 0 || maps.is_empty() {
            return Err(dim_err("coil maps need a nonempty grid and at least one coil"));
        }
        if let Some(bad) = maps.iter().position(|m| m.len() != n) {
            return Err(dim_err(format!("coil {bad} has {} entries, grid has {n}", maps[bad].len())));
        }
        Ok(Self { grid: Arc::new(FourierGrid::new(shape.0, shape.1)), maps })
    }

    /// One all-ones coil (plain undersampled DFT).
    pub fn uniform(nx: usize, ny: usize) -> Self {
        Self::new((nx, ny), vec![ComplexVector::from_element(nx * ny, C64::new(1.0, 0.0))])
            .expect("valid uniform coil")
    }

    /// Smooth Gaussian-bump sensitivities with linear phase, placed on a ring
    /// around the image center and normalized so `sum_j |D_j|^2 = 1` pointwise.
    pub fn synthetic(nx: usize, ny: usize, coils: usize) -> Self {
        let (cx, cy) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);
        let ring = 0.5 * nx.max(ny) as f64;
        let width = 0.6 * nx.max(ny) as f64;
        let mut maps: Vec<ComplexVector> = (0..coils)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / coils as f64;
                let (px, py) = (cx + ring * phi.cos(), cy + ring * phi.sin());
                ComplexVector::from_fn(nx * ny, |i, _| {
                    let (x, y) = ((i / ny) as f64, (i % ny) as f64);
                    let d2 = (x - px).powi(2) + (y - py).powi(2);
                    let mag = (-d2 / (2.0 * width * width)).exp();
                    let phase = phi + 0.3 * (x - cx) / nx as f64 + 0.2 * (y - cy) / ny as f64;
                    C64::from_polar(mag, phase)
                })
            })
            .collect();
        for i in 0..nx * ny {
            let total: f64 = maps.iter().map(|m| m[i].norm_sqr()).sum::<f64>().sqrt();
            for m in &mut maps {
                m[i] /= total;
            }
        }
        Self::new((nx, ny), maps).expect("valid synthetic coils")
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn count(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[ComplexVector] {
        &self.maps
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }
}

/// `A = stack_j [ H F D_j ]`: coil weighting, unitary 2-D DFT and mask
/// selection. Output is coil-major: all samples of coil 0, then coil 1, ...
#[derive(Debug, Clone)]
pub struct MaskedFourierCoilOp {
    coils: Arc<CoilMaps>,
    mask: SamplingMask,
    fft_idx: Vec<usize>,
}

impl MaskedFourierCoilOp {
    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coils(&self) -> &Arc<CoilMaps> {
        &self.coils
    }
}

/// Builds the multi-coil masked-Fourier operator for one frame.
pub fn compose_multicoil(mask: SamplingMask, coils: &Arc<CoilMaps>) -> Result<MaskedFourierCoilOp> {
    mask.validate(coils.shape())?;
    let grid = coils.grid();
    let fft_idx = mask.indices.iter().map(|&p| grid.fft_index(p)).collect();
    Ok(MaskedFourierCoilOp { coils: Arc::clone(coils), mask, fft_idx })
}

impl MeasurementOp for MaskedFourierCoilOp {
    fn rows(&self) -> usize {
        self.fft_idx.len() * self.coils.count()
    }

    fn cols(&self) -> usize {
        self.coils.n()
    }

    fn apply(&self, x: &ComplexVector) -> ComplexVector {
        assert_eq!(x.len(), self.cols(), "image length mismatch");
        let per = self.fft_idx.len();
        let mut out = ComplexVector::zeros(self.rows());
        let mut buf = vec![C64::new(0.0, 0.0); self.cols()];
        for (j, d) in self.coils.maps().iter().enumerate() {
            for (b, (xi, di)) in buf.iter_mut().zip(x.iter().zip(d.iter())) {
                *b = xi * di;
            }
            self.coils.grid().forward(&mut buf);
            for (s, &i) in self.fft_idx.iter().enumerate() {
                out[j * per + s] = buf[i];
            }
        }
        out
    }

    fn adjoint(&self, y: &ComplexVector) -> ComplexVector {
        assert_eq!(y.len(), self.rows(), "measurement length mismatch");
        let per = self.fft_idx.len();
        let mut acc = ComplexVector::zeros(self.cols());
        let mut buf = vec![C64::new(0.0, 0.0); self.cols()];
        for (j, d) in self.coils.maps().iter().enumerate() {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for (s, &i) in self.fft_idx.iter().enumerate() {
                buf[i] = y[j * per + s];
            }
            self.coils.grid().inverse(&mut buf);
            for ((a, b), di) in acc.iter_mut().zip(&buf).zip(d.iter()) {
                *a += di.conj() * b;
            }
        }
        acc
    }

    fn column_norms(&self) -> Vec<f64> {
        // every unitary-DFT entry of e_j has modulus 1/sqrt(n)
        let frac = self.fft_idx.len() as f64 / self.cols() as f64;
        (0..self.cols())
            .map(|j| (frac * self.coils.maps().iter().map(|d| d[j].norm_sqr()).sum::<f64>()).sqrt())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{adjoint_mismatch, make_pseudo_radial_masks, DenseOp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_mask(nx: usize, ny: usize) -> SamplingMask {
        let idx = (0..nx as u32).flat_map(|x| (0..ny as u32).map(move |y| (x, y))).collect();
        SamplingMask { frame_index: 0, indices: idx }
    }

    fn random_image(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
        ComplexVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn full_mask_single_coil_is_unitary() {
        let coils = Arc::new(CoilMaps::uniform(6, 4));
        let op = compose_multicoil(full_mask(6, 4), &coils).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_image(&mut rng, 24);
        let y = op.apply(&x);
        assert!((y.norm() - x.norm()).abs() < 1e-12);
        let back = op.adjoint(&y);
        assert!((back - &x).norm() < 1e-10 * x.norm());
    }

    #[test]
    fn matches_naive_dft() {
        let (nx, ny) = (4, 3);
        let coils = Arc::new(CoilMaps::uniform(nx, ny));
        let op = compose_multicoil(full_mask(nx, ny), &coils).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_image(&mut rng, nx * ny);
        let y = op.apply(&x);
        // centered coordinate (kx, ky) -> frequency (kx - nx/2, ky - ny/2)
        for (s, &(kx, ky)) in op.mask().indices.iter().enumerate() {
            let (fx, fy) = (kx as f64 - (nx / 2) as f64, ky as f64 - (ny / 2) as f64);
            let mut acc = C64::new(0.0, 0.0);
            for px in 0..nx {
                for py in 0..ny {
                    let ang = -2.0 * PI * (fx * px as f64 / nx as f64 + fy * py as f64 / ny as f64);
                    acc += x[px * ny + py] * C64::from_polar(1.0, ang);
                }
            }
            acc /= ((nx * ny) as f64).sqrt();
            assert!((acc - y[s]).norm() < 1e-12);
        }
    }

    #[test]
    fn multicoil_adjoint_random_pairs() {
        let coils = Arc::new(CoilMaps::synthetic(16, 12, 3));
        let masks = make_pseudo_radial_masks(16, 12, 2, 4, 0).unwrap();
        let op = compose_multicoil(masks[1].clone(), &coils).unwrap();
        assert_eq!(op.rows(), masks[1].len() * 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            assert!(adjoint_mismatch(&op, &mut rng) < 1e-8);
        }
        let dense = DenseOp::materialize(&op);
        let x = random_image(&mut rng, 16 * 12);
        assert!((dense.apply(&x) - op.apply(&x)).norm() < 1e-12 * x.norm().max(1.0));
        for (a, b) in op.column_norms().iter().zip(dense.column_norms()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_coils_are_normalized() {
        let coils = CoilMaps::synthetic(10, 10, 4);
        for i in 0..100 {
            let s: f64 = coils.maps().iter().map(|m| m[i].norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // full sampling of normalized coils is an isometry
        let coils = Arc::new(coils);
        let op = compose_multicoil(full_mask(10, 10), &coils).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_image(&mut rng, 100);
        assert!((op.apply(&x).norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        assert!(CoilMaps::new((2, 2), vec![ComplexVector::zeros(3)]).is_err());
        let coils = Arc::new(CoilMaps::uniform(2, 2));
        let bad = SamplingMask { frame_index: 0, indices: vec![(2, 0)] };
        assert!(compose_multicoil(bad, &coils).is_err());
    }
}
