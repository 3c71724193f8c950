//! Experiment configuration: TOML file, then command-line overrides.
//!
//! ```toml
//! subset = "SYNTH"        # FD001 | FD003 | SYNTH
//! model = "lstm"          # raw_ridge | ridge_fe | poly_ridge | gbdt | cnn | lstm
//! seed = 42               # copied into every component seed
//! data_root = "data"      # directory holding train_/test_/RUL_<subset>.txt
//! out = "out"
//!
//! [pipeline]
//! max_rul = 130
//! split_ratio = 0.8
//!
//! [ridge]
//! alpha = 1.0
//!
//! [gbdt]      # GbdtConfig fields
//! [train]     # TrainConfig fields
//! [synth]     # SyntheticSpec fields, used when subset = "SYNTH"
//! ```

use std::path::{Path, PathBuf};

use rul_core::experiment::{ModelKind, ModelSettings};
use rul_core::pipeline::PipelineConfig;
use rul_core::{GbdtConfig, RulConfig, SubsetId, SyntheticSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Env var consulted when neither the flag nor the file names a data root.
pub const DATA_ROOT_ENV: &str = "CMAPSS_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub max_rul: u32,
    pub split_ratio: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self { max_rul: p.rul.max_rul, split_ratio: p.split_ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeSection {
    pub alpha: f64,
}

impl Default for RidgeSection {
    fn default() -> Self {
        Self { alpha: ModelSettings::default().alpha }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subset: SubsetId,
    pub model: ModelKind,
    pub seed: u64,
    pub data_root: Option<PathBuf>,
    pub out: PathBuf,
    pub pipeline: PipelineSection,
    pub ridge: RidgeSection,
    pub gbdt: GbdtConfig,
    pub train: TrainConfig,
    pub synth: SyntheticSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            subset: SubsetId::SYNTH,
            model: ModelKind::RawRidge,
            seed: 42,
            data_root: None,
            out: PathBuf::from("out"),
            pipeline: PipelineSection::default(),
            ridge: RidgeSection::default(),
            gbdt: GbdtConfig::default(),
            train: TrainConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub subset: Option<SubsetId>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub data_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_rul: Option<u32>,
    pub max_epochs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Applies overrides, propagates the top-level seed and checks values.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(v) = o.subset {
            self.subset = v;
        }
        if let Some(v) = o.model {
            self.model = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.data_root {
            self.data_root = Some(v.clone());
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.max_rul {
            self.pipeline.max_rul = v;
        }
        if let Some(v) = o.max_epochs {
            self.train.max_epochs = v;
        }
        if self.data_root.is_none() {
            self.data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        }
        self.gbdt.seed = self.seed;
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.pipeline.max_rul == 0 {
            return bad("pipeline.max_rul must be positive".into());
        }
        if !(self.pipeline.split_ratio > 0.0 && self.pipeline.split_ratio < 1.0) {
            return bad(format!("pipeline.split_ratio {} outside (0, 1)", self.pipeline.split_ratio));
        }
        if !(self.ridge.alpha >= 0.0 && self.ridge.alpha.is_finite()) {
            return bad(format!("ridge.alpha {} must be finite and nonnegative", self.ridge.alpha));
        }
        if self.train.batch_size == 0 || self.train.max_epochs == 0 {
            return bad("train.batch_size and train.max_epochs must be positive".into());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive".into());
        }
        if self.subset == SubsetId::SYNTH {
            self.synth.validate().map_err(|e| CliError::Usage(format!("synth: {e}")))?;
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            rul: RulConfig { max_rul: self.pipeline.max_rul },
            split_ratio: self.pipeline.split_ratio,
            seed: self.seed,
        }
    }

    pub fn model_settings(&self) -> ModelSettings {
        ModelSettings { alpha: self.ridge.alpha, gbdt: self.gbdt.clone(), train: self.train.clone() }
    }

    /// Hash of everything that affects results. Paths are left out so
    /// moving the output or data directory keeps the hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
            obj.remove("data_root");
        }
        short_digest(v.to_string().as_bytes())
    }

    /// `config_hash=<hash>`, the header comment every output carries.
    pub fn stamp(&self) -> String {
        format!("config_hash={}", self.hash())
    }
}

/// First 16 hex digits of a SHA-256.
pub fn short_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}
