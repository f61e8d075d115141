//! Low-rank plus sparse matrix recovery from column-wise undersampled linear
//! measurements by alternating gradient descent and minimization (AltGDmin).
//!
//! The crate provides
//! - measurement operators (dense Gaussian, multi-coil masked Fourier) and
//!   pseudo-radial sampling masks,
//! - numerical kernels (CGLS, thin QR, truncated SVD, small least squares),
//! - the basic L+S and LR-only AltGDmin solvers,
//! - the three-level (mean + L+S + residual) batch reconstruction,
//! - mini-batch streaming reconstruction with low-latency per-frame estimates,
//! - synthetic data generators and a Monte-Carlo experiment harness.

pub mod agm;
pub mod error;
pub mod fewshot;
pub mod harness;
pub mod hierarchical;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod rng;
pub mod solvers;
pub mod threshold;

pub use error::{LpsError, Result};
pub use metrics::{nrmse, relative_change, scale_invariant_error, subspace_distance};
pub use model::{
    ComplexMatrix, ComplexVector, Frame, FrameSet, LpSEstimate, RankCapRule, ReconConfig, Subspace, C64,
};
pub use threshold::{hard_threshold_topk, max_abs, soft_threshold};
