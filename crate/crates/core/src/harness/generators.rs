//! Seeded ground-truth generators.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LpsError, Result};
use crate::model::{complexify, ComplexMatrix, ComplexVector, Subspace, C64};
use crate::rng::{stream_rng, TRUTH_STREAM};
use crate::solvers::thin_qr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticMode {
    LpsGaussian,
    ThreeLevel,
    SlowStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub q: usize,
    pub r: usize,
    pub rho: usize,
    /// Magnitude `a` of the sparse entries.
    pub sparse_magnitude: f64,
    pub m: usize,
    pub seed: u64,
    pub mode: SyntheticMode,
}

impl SyntheticSpec {
    /// Gaussian-sensing L+S setting with `n = q`.
    pub fn gaussian(n: usize, m: usize, r: usize, rho: usize, a: f64, seed: u64) -> Self {
        Self { n, q: n, r, rho, sparse_magnitude: a, m, seed, mode: SyntheticMode::LpsGaussian }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LpsError::InvalidArgument(msg));
        if self.n == 0 || self.q == 0 || self.m == 0 {
            return bad("n, q and m must be positive".into());
        }
        if self.rho > self.n {
            return bad(format!("rho = {} exceeds n = {}", self.rho, self.n));
        }
        if self.r == 0 || self.r > self.n.min(self.q) {
            return bad(format!("rank {} outside 1..=min(n, q)", self.r));
        }
        if !(self.sparse_magnitude.is_finite() && self.sparse_magnitude > 0.0) {
            return bad("sparse magnitude must be positive".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct LpsTruth {
    pub subspace: Subspace,
    pub coeffs: ComplexMatrix,
    pub low_rank: ComplexMatrix,
    pub sparse: ComplexMatrix,
    pub x: ComplexMatrix,
}

fn gaussian_real(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_complex(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
    })
}

fn orthonormalize(m: &ComplexMatrix) -> Result<Subspace> {
    Ok(thin_qr(m)?.0)
}

/// `rho` distinct positions per column, each `+a` or `-a`.
fn sign_sparse(rng: &mut ChaCha8Rng, n: usize, q: usize, rho: usize, a: f64) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(n, q);
    for k in 0..q {
        for i in sample(rng, n, rho).into_iter() {
            let v = if rng.random::<bool>() { a } else { -a };
            s[(i, k)] = C64::new(v, 0.0);
        }
    }
    s
}

/// Random-phase entries of modulus `a` on `rho` distinct positions.
fn phase_sparse_column(rng: &mut ChaCha8Rng, n: usize, rho: usize, a: f64) -> ComplexVector {
    let mut s = ComplexVector::zeros(n);
    for i in sample(rng, n, rho).into_iter() {
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        s[i] = C64::from_polar(a, phi);
    }
    s
}

/// Real-valued L+S truth: orthonormalized Gaussian `U*`, Gaussian `B*`,
/// `rho` signed spikes of magnitude `a` per column.
pub fn generate_lps_truth(spec: &SyntheticSpec) -> Result<LpsTruth> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, TRUTH_STREAM);
    let subspace = orthonormalize(&complexify(&gaussian_real(&mut rng, spec.n, spec.r)))?;
    let coeffs = complexify(&gaussian_real(&mut rng, spec.r, spec.q));
    let low_rank = subspace.basis() * &coeffs;
    let sparse = sign_sparse(&mut rng, spec.n, spec.q, spec.rho, spec.sparse_magnitude);
    let x = &low_rank + &sparse;
    Ok(LpsTruth { subspace, coeffs, low_rank, sparse, x })
}

/// Relative Frobenius energies `||E|| : ||UB + S|| : ||mean 1^T||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerRatios {
    pub residual: f64,
    pub lps: f64,
    pub mean: f64,
}

impl Default for LayerRatios {
    fn default() -> Self {
        Self { residual: 1.0, lps: 10.0, mean: 100.0 }
    }
}

impl LayerRatios {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.residual) && ok(self.lps) && ok(self.mean)) || self.mean == 0.0 || self.lps == 0.0 {
            return Err(LpsError::InvalidArgument("layer ratios must be non-negative with positive mean and L+S".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelSpec {
    pub n: usize,
    pub q: usize,
    pub r: usize,
    /// Nonzeros per column of the sparse layer.
    pub rho: usize,
    /// `||S|| / ||UB||` before the joint rescaling of the L+S layer.
    pub sparse_share: f64,
    pub ratios: LayerRatios,
    pub seed: u64,
}

impl ThreeLevelSpec {
    pub fn new(n: usize, q: usize, r: usize, seed: u64) -> Self {
        Self { n, q, r, rho: 4, sparse_share: 0.3, ratios: LayerRatios::default(), seed }
    }
}

#[derive(Debug, Clone)]
pub struct ThreeLevelTruth {
    pub mean: ComplexVector,
    pub subspace: Subspace,
    pub coeffs: ComplexMatrix,
    pub sparse: ComplexMatrix,
    pub residual: ComplexMatrix,
    pub z: ComplexMatrix,
}

impl ThreeLevelTruth {
    pub fn low_rank(&self) -> ComplexMatrix {
        self.subspace.basis() * &self.coeffs
    }
}

fn scale_to(m: &mut ComplexMatrix, target: f64) {
    let norm = m.norm();
    if norm > 0.0 {
        *m *= C64::new(target / norm, 0.0);
    }
}

/// Complex three-level truth `z_k = mean + U b_k + s_k + e_k` with layer
/// energies in the requested ratios.
pub fn generate_three_level_truth(spec: &ThreeLevelSpec) -> Result<ThreeLevelTruth> {
    spec.ratios.validate()?;
    let (n, q, r) = (spec.n, spec.q, spec.r);
    if n == 0 || q == 0 || r == 0 || r > n.min(q) || spec.rho > n {
        return Err(LpsError::InvalidArgument(format!("bad three-level shape n={n} q={q} r={r} rho={}", spec.rho)));
    }
    let mut rng = stream_rng(spec.seed, TRUTH_STREAM);
    let mut mean = gaussian_complex(&mut rng, n, 1).column(0).into_owned();
    let subspace = orthonormalize(&gaussian_complex(&mut rng, n, r))?;
    let mut coeffs = gaussian_complex(&mut rng, r, q);
    let mut sparse = ComplexMatrix::zeros(n, q);
    for k in 0..q {
        sparse.set_column(k, &phase_sparse_column(&mut rng, n, spec.rho, 1.0));
    }
    let mut residual = gaussian_complex(&mut rng, n, q);

    let ub_norm = coeffs.norm();
    if spec.rho > 0 && spec.sparse_share > 0.0 {
        scale_to(&mut sparse, spec.sparse_share * ub_norm);
    } else {
        sparse.fill(C64::new(0.0, 0.0));
    }
    // L+S layer scaled jointly so its Frobenius norm hits `ratios.lps`.
    let lps_norm = (subspace.basis() * &coeffs + &sparse).norm();
    let f = C64::new(spec.ratios.lps / lps_norm, 0.0);
    coeffs *= f;
    sparse *= f;
    let mean_target = spec.ratios.mean / (q as f64).sqrt();
    mean *= C64::new(mean_target / mean.norm(), 0.0);
    if spec.ratios.residual == 0.0 {
        residual.fill(C64::new(0.0, 0.0));
    } else {
        scale_to(&mut residual, spec.ratios.residual);
    }

    let mut z = subspace.basis() * &coeffs + &sparse + &residual;
    for mut col in z.column_iter_mut() {
        col += &mean;
    }
    Ok(ThreeLevelTruth { mean, subspace, coeffs, sparse, residual, z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    /// Fraction of frames carrying a burst.
    pub frame_fraction: f64,
    pub rho: usize,
    /// Entry modulus relative to the RMS entry of the clean frame.
    pub amplitude: f64,
}

impl Default for BurstSpec {
    fn default() -> Self {
        Self { frame_fraction: 0.05, rho: 8, amplitude: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowStreamSpec {
    pub n: usize,
    pub q: usize,
    pub r: usize,
    pub alpha: usize,
    /// `||mean_l - mean_{l-1}|| / ||mean_{l-1}||`
    pub mean_drift: f64,
    /// Givens angle (radians) applied to the basis at each new batch.
    pub rotation_per_batch: f64,
    pub bursts: Option<BurstSpec>,
    pub ratios: LayerRatios,
    pub seed: u64,
}

impl SlowStreamSpec {
    pub fn new(n: usize, q: usize, r: usize, alpha: usize, seed: u64) -> Self {
        Self {
            n,
            q,
            r,
            alpha,
            mean_drift: 0.01,
            rotation_per_batch: 0.02,
            bursts: None,
            ratios: LayerRatios::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlowStream {
    /// Frame truths, `n x q`.
    pub z: ComplexMatrix,
    /// One mean image per batch.
    pub means: Vec<ComplexVector>,
    /// One basis per batch.
    pub subspaces: Vec<Subspace>,
    pub coeffs: ComplexMatrix,
    pub sparse: ComplexMatrix,
    pub residual: ComplexMatrix,
    pub burst_frames: Vec<usize>,
    pub alpha: usize,
}

impl SlowStream {
    pub fn batch_of(&self, frame: usize) -> usize {
        frame / self.alpha
    }
}

/// `G` with a rotation by `theta` in the `(i, j)` plane applied on the right.
fn givens_right(g: &mut DMatrix<f64>, i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    for row in 0..g.nrows() {
        let (gi, gj) = (g[(row, i)], g[(row, j)]);
        g[(row, i)] = c * gi + s * gj;
        g[(row, j)] = -s * gi + c * gj;
    }
}

/// Slowly varying stream: the basis lives in a fixed `(r+1)`-dim subspace and
/// turns by one random Givens rotation per batch; the mean drifts; optional
/// sparse bursts hit a random subset of frames.
pub fn generate_slow_stream(spec: &SlowStreamSpec) -> Result<SlowStream> {
    spec.ratios.validate()?;
    let (n, q, r, alpha) = (spec.n, spec.q, spec.r, spec.alpha);
    if alpha == 0 || q == 0 || r == 0 || r + 1 > n {
        return Err(LpsError::InvalidArgument(format!("bad stream shape n={n} q={q} r={r} alpha={alpha}")));
    }
    let n_batches = q.div_ceil(alpha);
    let mut rng = stream_rng(spec.seed, TRUTH_STREAM);
    let ambient = orthonormalize(&gaussian_complex(&mut rng, n, r + 1))?;
    let mut rot = DMatrix::<f64>::identity(r + 1, r + 1);
    let mut subspaces = Vec::with_capacity(n_batches);
    for l in 0..n_batches {
        if l > 0 {
            let i = rng.random_range(0..r);
            givens_right(&mut rot, i, r, spec.rotation_per_batch);
        }
        let g = complexify(&rot.columns(0, r).into_owned());
        subspaces.push(Subspace::from_orthonormal(ambient.basis() * g));
    }

    let mut means = Vec::with_capacity(n_batches);
    let mut mean = gaussian_complex(&mut rng, n, 1).column(0).into_owned();
    for l in 0..n_batches {
        if l > 0 {
            let d = gaussian_complex(&mut rng, n, 1).column(0).into_owned();
            let step = spec.mean_drift * mean.norm() / d.norm();
            mean = &mean + d * C64::new(step, 0.0);
        }
        means.push(mean.clone());
    }

    let mut coeffs = gaussian_complex(&mut rng, r, q);
    let mut residual = gaussian_complex(&mut rng, n, q);
    let mut lr = ComplexMatrix::zeros(n, q);
    for k in 0..q {
        lr.set_column(k, &(subspaces[k / alpha].basis() * coeffs.column(k)));
    }
    let f = spec.ratios.lps / lr.norm();
    coeffs *= C64::new(f, 0.0);
    lr *= C64::new(f, 0.0);
    let mean_energy: f64 = (0..q).map(|k| means[k / alpha].norm_squared()).sum();
    let mf = C64::new(spec.ratios.mean / mean_energy.sqrt(), 0.0);
    for m in &mut means {
        *m *= mf;
    }
    if spec.ratios.residual == 0.0 {
        residual.fill(C64::new(0.0, 0.0));
    } else {
        scale_to(&mut residual, spec.ratios.residual);
    }

    let mut z = lr + &residual;
    for k in 0..q {
        let mut col = z.column_mut(k);
        col += &means[k / alpha];
    }

    let mut sparse = ComplexMatrix::zeros(n, q);
    let mut burst_frames = Vec::new();
    if let Some(b) = &spec.bursts {
        let count = ((b.frame_fraction * q as f64).round() as usize).min(q);
        burst_frames = sample(&mut rng, q, count).into_vec();
        burst_frames.sort_unstable();
        for &k in &burst_frames {
            let rms = z.column(k).norm() / (n as f64).sqrt();
            let s = phase_sparse_column(&mut rng, n, b.rho.min(n), b.amplitude * rms);
            sparse.set_column(k, &s);
        }
        z += &sparse;
    }

    Ok(SlowStream { z, means, subspaces, coeffs, sparse, residual, burst_frames, alpha })
}
