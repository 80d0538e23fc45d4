//! Least-squares GANs that learn a target distribution from a contaminated
//! dataset plus a set of known contamination samples.

pub mod cli;
pub mod contamination;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod net;
pub mod objectives;
pub mod oracle;
pub mod scenarios;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
