// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod coefficients;
pub mod dirichlet;
pub mod error;
pub mod exhaustion;
pub mod experiments;
pub mod parabolic;
pub mod quadrature;
pub mod radial;
pub mod special;

pub use error::{MixlapError, Result};
