//! Noise calibration of cryogenic microwave amplification chains.
//!
//! The crate models amplification chains (loss and gain stages, Friis
//! reduction), calibrated noise sources (Johnson resistor and shot-noise
//! tunnel junction), phase-insensitive and phase-sensitive parametric
//! amplifiers, and fits measured or synthetic output-noise curves to recover
//! system gain and system-added noise.
//!
//! All noise quantities crossing module boundaries are photon-normalized
//! (quanta, `N = P / (h f)`); everything else is SI.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod error;
pub mod fitting;
pub mod io;
pub mod paramp;
pub mod quanta;
pub mod sources;
pub mod synth;

pub use error::{Error, Result};
