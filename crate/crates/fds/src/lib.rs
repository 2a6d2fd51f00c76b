//! File formats, scene directories, run configuration and the drivers behind
//! the `fds` command-line tool.

pub mod config;
pub mod error;
pub mod errormap;
pub mod eval;
pub mod io;
pub mod manifest;
pub mod prior;
pub mod train;

pub use error::{FdsError, Result};
