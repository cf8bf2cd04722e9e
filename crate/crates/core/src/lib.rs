//! Integrate-and-fire time-encoding link: M-PAM synthesis, IF-TEM encoding,
//! maximum-likelihood symbol timing recovery and weighted zero-forcing detection,
//! plus a Monte Carlo harness for symbol-error-rate and timing-MSE experiments.

// `!(x < y)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod harness;
pub mod likelihood;
pub mod quad;
pub mod tem;
pub mod timing;
pub mod waveform;

pub use error::{Error, Result};
