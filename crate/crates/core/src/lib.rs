//! Rydberg wave packets kicked by half-cycle pulses, with simulated detector
//! ensembles and covariance coherence analysis.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod config;
pub mod error;
pub mod measurement;
pub mod pipeline;
pub mod units;
pub mod wavepacket;

pub use error::{Error, Result};
