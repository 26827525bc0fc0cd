//! Residual expert-conditioned forecasting.
//!
//! A recurrent network is trained to correct the one-step forecasts of a
//! classical "expert" model: the network sees the recent window together
//! with the expert's prediction and its output is added back onto that
//! prediction. The crate contains the preprocessing, a seasonal ARIMA
//! expert, a from-scratch LSTM, the residual composition and an experiment
//! harness that compares the three forecasters.

pub mod config;
pub mod error;
pub mod experiments;
pub mod expert;
pub mod kinn;
pub mod nn;
pub mod timeseries;

pub use error::{ErrorClass, KinnError, Result};
