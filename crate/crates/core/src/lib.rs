//! Row and eigenvalue large deviations for random words, GUE spectra and the
//! rate functions that describe them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod montecarlo;
pub mod presets;
pub mod quadrature;
pub mod rate_functions;
pub mod rmt;
pub mod rng;
pub mod stats;
pub mod tableaux;
pub mod variational;
pub mod wordmodel;

pub use error::{Error, Result};
