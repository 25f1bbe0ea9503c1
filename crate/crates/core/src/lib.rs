//! Single-channel EEG fatigue detection.
//!
//! The pipeline picks the channel with the largest variance, cuts it into
//! overlapping rectangular windows, and describes each window with four
//! numbers: the consistency-scaled MCD scale, the MCD location, the sample
//! variance and the lag-zero autocovariance. A bagged ensemble of CART trees
//! then labels windows as alert (0) or fatigue (1).

pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod mcd;
pub mod signal_io;
pub mod stats;
pub mod stream;

pub use error::{Error, Result};
