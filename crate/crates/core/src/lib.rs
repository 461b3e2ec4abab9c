#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao;
pub mod cli;
pub mod error;
pub mod montecarlo;
pub mod optics;
pub mod qkd;
pub mod spectral;
pub mod sweep;
pub mod turbulence;
pub mod validation;

pub use error::{Error, Result};
