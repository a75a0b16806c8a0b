//! Variance estimation with the Gaussian conjugate prior: special functions,
//! the normal-gamma prior and its KL-based update, the expectation-level
//! dynamics of the prior parameters, a small neural-network trainer, data
//! handling and evaluation.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod nn;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
pub use prior::{GcpGradient, NormalGammaParams, PredictiveEstimates};
