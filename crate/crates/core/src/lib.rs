//! Learning latent-variable and random-field models by stochastic
//! approximation, with exact oracles for small instances.

pub mod dists;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod learn;
pub mod models;
pub mod num;
pub mod oracle;
pub mod sa;
pub mod samplers;

pub use error::{Error, Result};
