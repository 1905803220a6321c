// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod copula;
pub mod count_models;
pub mod data;
pub mod error;
pub mod eval;
pub mod mle;
pub mod par;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod roots;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
