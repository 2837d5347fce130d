//! Latent-state recovery from noisy time series.
//!
//! The centerpiece is a dilated 1-d convolution network trained purely on
//! simulator output: an ensemble of generative models produces (latent,
//! observation) pairs, and the network learns to map an observed window back
//! to the latent trajectory. Classical smoothers (GP regression, Kalman/RTS,
//! extended and unscented Kalman smoothers, zero-phase Butterworth
//! filtering) are included as baselines, together with experiment runners
//! that benchmark everything on shared, seeded test trials.

pub mod baselines;
pub mod container;
pub mod error;
pub mod nn;
pub mod rng;
pub mod series;
pub mod simulators;

pub use error::{Error, Result};
pub use series::{TimeGrid, TimeSeries};
