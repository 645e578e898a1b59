//! Frequency-domain reconstruction of a sound-speed perturbation in a
//! horizontal slab from layered acoustic measurements above it.

// negated comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod gf;
pub mod grid;
pub mod kernel;
pub mod operator;
pub mod pipeline;
pub mod regsolve;
pub mod spectral;

pub use error::{Error, Result};
