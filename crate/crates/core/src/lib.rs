//! Power-distribution-network analysis and load-current estimation.
//!
//! The crate covers the full chain from measured network parameters to a
//! time-domain load-current estimate:
//!
//! - [`spectra`]: frequency-domain port matrices, S/Y/Z conversion and
//!   interpolation.
//! - [`touchstone`]: Touchstone 1.0 reader and writer.
//! - [`circuits`]: RLC branches, Pi networks, equivalent-circuit fitting and
//!   2x-THRU de-embedding.
//! - [`vector_fit`]: rational approximation, passivity check and enforcement.
//! - [`state_space`]: real realisations and discrete-time simulation.
//! - [`estimator`]: load-current estimation from two port voltages.
//! - [`pdn_lab`]: synthetic lab that simulates a known network and scores
//!   the estimator against ground truth.

pub mod circuits;
pub mod error;
pub mod estimator;
pub mod pdn_lab;
pub mod spectra;
pub mod state_space;
pub mod touchstone;
pub mod vector_fit;
pub mod waveform;

pub use error::{Error, Result};
