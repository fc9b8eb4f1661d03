//! Numerical core for predicting the optimal mmWave downlink beam from an
//! estimated sub-6GHz uplink channel fused with a handful of mmWave pilots.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `beamfuse` crate.
//!
//! Pipeline, module by module:
//!
//! - [`channel`]: ray parameters to multi-antenna OFDM channel matrices.
//! - [`estimation`]: noisy LS estimates of the sub-6GHz channel and of the
//!   active mmWave antennas through a DFT training matrix.
//! - [`beams`]: DFT codebook, achievable rate and exhaustive beam labels.
//! - [`datapipe`]: delay-domain transforms, normalization, phase augmentation
//!   and dataset assembly.
//! - [`nn`]: a small MLP toolkit (dense, batchnorm, relu, dropout, Adam).
//! - [`models`]: FusionNet and the comparison networks, training and metrics.

#![no_std]
// `!(x > 0.0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod beams;
pub mod channel;
pub mod datapipe;
mod error;
pub mod estimation;
pub mod models;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
