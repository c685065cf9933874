#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

mod error;
pub mod filtering;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod smc;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
