//! Remaining-useful-life (RUL) estimation for run-to-failure turbofan data.
//!
//! The crate covers the full path from C-MAPSS text files to evaluated
//! predictions: parsing ([`cmapss`]), preprocessing and windowing
//! ([`pipeline`]), engineered features ([`features`]), closed-form ridge
//! ([`linmodel`]), boosted trees ([`gbdt`]), hand-differentiated CNN and
//! LSTM networks ([`neural`], [`archs`]), metrics ([`metrics`]) and the
//! temporal diagnostics ([`analysis`]). [`experiment`] wires these together
//! for the command-line front end.

pub mod analysis;
pub mod archs;
pub mod cmapss;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gbdt;
pub mod linmodel;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod rng;

pub use archs::{CnnModel, LstmModel, NeuralModel, TrainConfig, TrainReport};
pub use cmapss::{DatasetBundle, EngineSeries, RawRow, SubsetId, SyntheticSpec};
pub use error::{Result, RulError};
pub use features::FeatureMatrix;
pub use gbdt::{GbdtConfig, GbdtModel};
pub use linmodel::RidgeModel;
pub use metrics::EvalReport;
pub use pipeline::{EngineSplit, RulConfig, Scaler, SensorSelection, WindowSet};

/// Number of cycles in every model input window.
pub const WINDOW: usize = 30;
/// Operational settings per row.
pub const N_SETTINGS: usize = 3;
/// Sensor channels per row.
pub const N_SENSORS: usize = 21;
