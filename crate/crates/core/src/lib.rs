//! Numerical core of a semi-supervised learner whose consistency term is an
//! optimal-transport loss between teacher pseudo-labels and student
//! predictions under a learned inter-class cost.
//!
//! `no_std` with `alloc`; file formats, config and the CLI live in the
//! `otmatch` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
extern crate alloc;

pub mod cost;
pub mod data;
pub mod ema;
pub mod engine;
pub mod losses;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod ot;
pub mod thresholds;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
