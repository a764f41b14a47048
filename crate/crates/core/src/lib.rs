//! Quantum image encoding with quantized tensor trains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod circuit;
pub mod cli;
pub mod encoders;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod synthesis;
pub mod tensor;

pub use error::{Error, Result};
