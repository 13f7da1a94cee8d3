//! File formats, flow visualization, benchmark suites, the `flowfill` CLI
//! and the HTTP service, on top of `flowfill-core`.

pub mod bench;
pub mod cli;
pub mod error;
pub mod formats;
pub mod server;
pub mod viz;

pub use error::{AppError, Result};
