//! Global air-pollution estimation: station QC, feature assembly, histogram
//! gradient-boosted trees with quantile intervals, spatial validation
//! experiments and 0.25° grid products.

pub mod aqi;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod features;
pub mod gbdt;
pub mod grid;
pub mod intervals;
pub mod splitter;
pub mod station_store;
pub mod synth;
pub mod tuner;
pub mod types;

pub use error::{Error, Result};
