//! Power and sample-size calculations for clinical trials whose primary
//! endpoint mixes continuous, ordinal and binary outcomes, built on a latent
//! multivariate Gaussian model.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod endpoint;
pub mod error;
pub mod fit;
pub mod format;
pub mod mvn;
pub mod power;
pub mod sample_size;
pub mod sim;

pub use error::{Error, Result};
