//! Benchmark library for monthly time-series forecasting experiments.
//!
//! The crate covers the full experimental loop: corpus ingestion and
//! supervised windowing, a small reverse-mode autodiff engine driving three
//! neural forecaster families (CNN, LSTM, TCN), classical baselines (theta,
//! exponential smoothing, seasonal naive), last-layer transfer adaptation of
//! globally pre-trained networks, rolling-origin evaluation with
//! Friedman/Nemenyi ranking, and per-series characterization with k-medoids
//! clustering.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Scalar`];
//! the shipped pipeline instantiates everything at `f64` (see the aliases at
//! the crate root).

pub mod analysis;
pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod forecasters;
pub mod scalar;
pub mod seeding;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete double-precision aliases used by the CLI harness and tests.
pub type Tensor = autodiff::Tensor<f64>;
pub type ParameterSet = autodiff::ParameterSet<f64>;
pub type AdamState = autodiff::AdamState<f64>;
pub type TimeSeries = dataset::TimeSeries<f64>;
pub type ScalerParams = dataset::ScalerParams<f64>;
pub type SupervisedWindowSet = dataset::SupervisedWindowSet<f64>;
