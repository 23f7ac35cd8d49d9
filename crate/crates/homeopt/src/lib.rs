//! File formats, model bundles, reports and the command-line pipeline on top
//! of `homeopt-core`.

pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod trace_io;

pub use error::{Error, Result};
