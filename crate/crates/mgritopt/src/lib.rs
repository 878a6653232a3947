//! Command line, file formats and threaded execution for `mgritopt-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod exec;
pub mod io;
pub mod timing;

pub use exec::ThreadPoolExecutor;
