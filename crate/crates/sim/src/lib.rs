//! File formats, Monte Carlo harness and command line for `cbmdetect-core`.

pub mod cli;
pub mod detect;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{Result, SimError};
