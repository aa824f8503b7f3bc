//! Stability analysis and synthesis of randomly switched linear and
//! quasilinear systems driven by unit-dwell Bernoulli switching signals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exponents;
pub mod flow;
pub mod lie;
pub mod matkit;
pub mod stability;
pub mod symdyn;

pub use error::{Error, Result};
