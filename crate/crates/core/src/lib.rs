#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraint;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod problems;
pub mod reaction;
pub mod splitting;
pub mod subflows;

pub use error::{Error, Result};
