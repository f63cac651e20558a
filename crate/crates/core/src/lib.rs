#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod debugger;
pub mod error;
pub mod faults;
pub mod metrics;
pub mod nn;
pub mod program;
pub mod tensor;

pub use error::{Error, Result};
