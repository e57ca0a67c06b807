// `!(x > 0.0)` is used on purpose so NaN fails the same checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autoencoder;
pub mod cav;
pub mod cli;
pub mod error;
pub mod explore;
pub mod numerics;
pub mod regressor;
pub mod service;
pub mod shapes;
pub mod study;

pub use error::{Error, Result};
