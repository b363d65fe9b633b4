//! File formats, configuration, graph export and the command-line front end
//! for `immc-core`.

pub mod cli;
pub mod clock;
pub mod config;
pub mod dot;
pub mod error;
pub mod io;

pub use error::{IoError, Result};
