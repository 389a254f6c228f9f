//! Data-driven efficient score tests for deconvolution hypotheses.
//!
//! Tests whether a noisy signal Y = X + eps has a given signal density f0,
//! observing only Y. The simple case treats the noise density as known; the
//! composite case treats it as a parametric family with a nuisance parameter
//! estimated from the data. Test statistics are quadratic forms in the
//! (efficient) score, referred to chi-square, with a penalized data-driven
//! choice of the model dimension. A seeded Monte Carlo harness checks the
//! asymptotic behavior at desk scale.

pub mod cli;
pub mod error;
pub mod families;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod scores;
pub mod selection;
pub mod simulation;
pub mod teststat;

pub use error::{Error, Result};
