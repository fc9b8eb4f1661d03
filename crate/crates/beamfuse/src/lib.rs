//! File formats, configuration and the experiment harness around
//! `beamfuse-core`.

pub mod checkpoint;
pub mod config;
mod error;
pub mod harness;
pub mod rays;
pub mod results;
pub mod store;

pub use error::{HarnessError, Result};
