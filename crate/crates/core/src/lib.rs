//! Numerical laboratory for Gibbs measures of periodic NLS and KdV: sampling,
//! convexity certificates, periodic spectra of the Lax operators, split-step
//! flows, and concentration of spectral linear statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod convexity;
pub mod dirac;
pub mod error;
pub mod field;
pub mod flow;
pub mod gibbs;
pub mod hill;
pub mod spectral;
pub mod test_function;
mod transfer;

pub use error::{Error, Result};
pub use field::{GridSignal, PeriodicField};
pub use test_function::TestFunction;
