//! Numerical kernels shared by every reconstruction algorithm.

mod cgls;
mod lstsq;
mod qr;
mod rank;
mod svd;

pub use cgls::{cgls, CglsResult, CGLS_REL_TOL};
pub use lstsq::{ls_coeffs, ls_coeffs_min_norm};
pub use qr::thin_qr;
pub use rank::{estimate_rank, rank_cap};
pub(crate) use rank::rank_from_energy;
pub use svd::{leading_svd, top_r_svd, FULL_SVD_MAX_DIM};
