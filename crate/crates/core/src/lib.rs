//! Physics-guided LSTM forecasting of annual series.
//!
//! An LSTM is pretrained to forecast derivative triples of simulated
//! Lotka-Volterra prey dynamics, its weights are carried over unchanged,
//! and it is fine-tuned on a real series with a loss built from an LV
//! residual of those triples. The crate also holds the comparison
//! baselines and the split / multi-seed evaluation protocol.

pub mod baselines;
pub mod data;
pub mod differentials;
pub mod error;
pub mod evaluation;
pub mod lv;
pub mod model_file;
pub mod nn;
pub mod optim;
pub mod physics;
pub mod plot;
pub mod training;

pub use error::{Error, Result};
