//! Multi-coset sub-Nyquist acquisition of known pilots.
//!
//! The crate covers deterministic multi-coset sampling masks, the
//! compressed-domain GLRT over delay and Doppler, exhaustive offline design
//! of the coset pattern, and a Monte Carlo harness measuring estimation
//! error and acquisition cost against uniform sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod correlator;
pub mod design;
pub mod error;
pub mod harness;
pub mod multicoset;
pub mod pilot;
pub mod signal;

pub use error::{Error, Result};
