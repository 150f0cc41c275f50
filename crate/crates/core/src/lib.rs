//! Saturation-aware control of underactuated walkers with rapidly
//! exponentially stabilizing control Lyapunov functions.
//!
//! `no_std` with `alloc`. IO, file formats and the command line live in the
//! companion `clfqp` crate.

#![no_std]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod bezier;
pub mod clfqp;
pub mod error;
pub mod linalg;
pub mod mechsys;
pub mod models;
pub mod qp;
pub mod resclf;
pub mod sim;

pub use error::{Error, Result};
