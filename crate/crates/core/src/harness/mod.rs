//! Synthetic data, Monte-Carlo runner, incoherence diagnostic, experiment
//! drivers and report emitters.

mod experiments;
mod generators;
mod incoherence;
mod monte_carlo;
mod reports;

pub use experiments::*;
pub use generators::*;
pub use incoherence::incoherence_mu;
pub use monte_carlo::*;
pub use reports::*;
