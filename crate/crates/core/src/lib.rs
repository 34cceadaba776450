#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod adversary;
pub mod distribution;
pub mod error;
pub mod harness;
pub mod mathcore;
pub mod model;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
