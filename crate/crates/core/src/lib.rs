//! Stopping policies for the prophet inequality when rewards follow an
//! unknown linear model and are observed only through noise.
//!
//! Policies estimate the latent parameter by ridge regression, score each
//! stage by a lower confidence bound on its reward, and stop once that bound
//! clears a Monte Carlo threshold. The [`harness`] module runs them against
//! synthetic environments and estimates competitive ratios.

pub mod environments;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod policies;
pub mod rng;
pub mod thresholds;

pub use error::{Error, Result};
