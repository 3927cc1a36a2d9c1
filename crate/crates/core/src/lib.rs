//! Numerical laboratory for random walks on homogeneous spaces `G/H` of
//! `G = SL(d,R)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod cli;
pub mod decomp;
pub mod error;
pub mod group;
pub(crate) mod linalg;
pub mod lyapunov;
pub mod montecarlo;
pub mod stats;
pub mod subgroup;
pub mod transfer;
pub mod walk;

pub use error::{Error, Result};
