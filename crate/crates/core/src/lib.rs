#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gramian;
pub mod mlf;
pub mod quad;
pub mod semilinear;
pub mod spectral;

pub use error::{Error, Result};
