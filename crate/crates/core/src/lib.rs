// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod benchmarks;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod uncertainty;

pub use error::{Result, SpiError};
