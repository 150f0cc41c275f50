//! Scenario runner, file formats and command-line tools around `clfqp-core`.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod formats;
pub mod output;
pub mod runner;

pub use error::{CliError, Result};
