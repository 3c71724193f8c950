//! One model kind, fitted and evaluated on a prepared subset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archs::{build_cnn, build_lstm, train, NeuralModel, TrainConfig, TrainReport};
use crate::error::{Result, RulError};
use crate::features::{engineer_features, flatten_windows, polynomial_expand, FeatureMatrix};
use crate::gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::linmodel::{fit_ridge, RidgeModel};
use crate::metrics::EvalReport;
use crate::pipeline::{Prepared, Scaler, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RawRidge,
    RidgeFe,
    PolyRidge,
    Gbdt,
    Cnn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::RawRidge,
        ModelKind::RidgeFe,
        ModelKind::PolyRidge,
        ModelKind::Gbdt,
        ModelKind::Cnn,
        ModelKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RawRidge => "raw_ridge",
            ModelKind::RidgeFe => "ridge_fe",
            ModelKind::PolyRidge => "poly_ridge",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Cnn | ModelKind::Lstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = RulError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RulError::value(format!("unknown model '{s}' (expected one of raw_ridge, ridge_fe, poly_ridge, gbdt, cnn, lstm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// Ridge L2 strength.
    pub alpha: f64,
    pub gbdt: GbdtConfig,
    pub train: TrainConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self { alpha: 1.0, gbdt: GbdtConfig::default(), train: TrainConfig::default() }
    }
}

/// Ridge and boosted-tree models with whatever feature scaling they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalModel {
    RawRidge { ridge: RidgeModel },
    RidgeFe { feature_scaler: Scaler, ridge: RidgeModel },
    PolyRidge { feature_scaler: Scaler, ridge: RidgeModel },
    Gbdt { gbdt: GbdtModel },
}

impl ClassicalModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ClassicalModel::RawRidge { .. } => ModelKind::RawRidge,
            ClassicalModel::RidgeFe { .. } => ModelKind::RidgeFe,
            ClassicalModel::PolyRidge { .. } => ModelKind::PolyRidge,
            ClassicalModel::Gbdt { .. } => ModelKind::Gbdt,
        }
    }

    pub fn predict(&self, windows: &WindowSet, sensor_names: &[String]) -> Result<Vec<f64>> {
        match self {
            ClassicalModel::RawRidge { ridge } => ridge.predict(&flatten_windows(windows, sensor_names)?),
            ClassicalModel::RidgeFe { feature_scaler, ridge } => {
                ridge.predict(&engineer_features(windows, sensor_names)?.normalized(feature_scaler)?)
            }
            ClassicalModel::PolyRidge { feature_scaler, ridge } => {
                let f = engineer_features(windows, sensor_names)?.normalized(feature_scaler)?;
                ridge.predict(&polynomial_expand(&f))
            }
            ClassicalModel::Gbdt { gbdt } => gbdt.predict(&engineer_features(windows, sensor_names)?),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Classical(ClassicalModel),
    Neural(NeuralModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Classical(m) => m.kind(),
            TrainedModel::Neural(NeuralModel::Cnn(_)) => ModelKind::Cnn,
            TrainedModel::Neural(NeuralModel::Lstm(_)) => ModelKind::Lstm,
        }
    }

    pub fn predict(&self, windows: &WindowSet, sensor_names: &[String]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Classical(m) => m.predict(windows, sensor_names),
            TrainedModel::Neural(m) => m.predict_rul(windows),
        }
    }
}

/// Features fitted on training windows; returns the scaler when one is used.
fn scaled_engineered(prep: &Prepared, names: &[String]) -> Result<(FeatureMatrix, Scaler)> {
    let f = engineer_features(&prep.train, names)?;
    let scaler = f.fit_scaler()?;
    Ok((f.normalized(&scaler)?, scaler))
}

/// Fits `kind` on the training split. Neural models and the boosted trees
/// also consume the validation split; the test windows are never touched.
pub fn fit(kind: ModelKind, prep: &Prepared, settings: &ModelSettings) -> Result<(TrainedModel, Option<TrainReport>)> {
    let names = prep.selection.names();
    let y = &prep.train.y;
    let classical = match kind {
        ModelKind::RawRidge => ClassicalModel::RawRidge {
            ridge: fit_ridge(&flatten_windows(&prep.train, &names)?, y, settings.alpha)?,
        },
        ModelKind::RidgeFe => {
            let (f, feature_scaler) = scaled_engineered(prep, &names)?;
            ClassicalModel::RidgeFe { ridge: fit_ridge(&f, y, settings.alpha)?, feature_scaler }
        }
        ModelKind::PolyRidge => {
            let (f, feature_scaler) = scaled_engineered(prep, &names)?;
            ClassicalModel::PolyRidge { ridge: fit_ridge(&polynomial_expand(&f), y, settings.alpha)?, feature_scaler }
        }
        ModelKind::Gbdt => {
            let tf = engineer_features(&prep.train, &names)?;
            let vf = engineer_features(&prep.val, &names)?;
            ClassicalModel::Gbdt { gbdt: fit_gbdt(&tf, y, &vf, &prep.val.y, &settings.gbdt)? }
        }
        ModelKind::Cnn => {
            let init = build_cnn(prep.selection.len(), settings.train.seed);
            let (m, report) = train(init, &prep.train, &prep.val, &settings.train)?;
            return Ok((TrainedModel::Neural(NeuralModel::Cnn(m)), Some(report)));
        }
        ModelKind::Lstm => {
            let init = build_lstm(prep.selection.len(), settings.train.seed);
            let (m, report) = train(init, &prep.train, &prep.val, &settings.train)?;
            return Ok((TrainedModel::Neural(NeuralModel::Lstm(m)), Some(report)));
        }
    };
    Ok((TrainedModel::Classical(classical), None))
}

/// Metrics over the one-window-per-engine test set.
pub fn evaluate(model: &TrainedModel, prep: &Prepared) -> Result<EvalReport> {
    let pred = model.predict(&prep.test, &prep.selection.names())?;
    EvalReport::new(&prep.test.engine_of, &pred, &prep.test.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmapss::{generate_synthetic, SyntheticSpec};
    use crate::pipeline::{prepare, PipelineConfig};

    fn prepared() -> Prepared {
        let spec = SyntheticSpec { n_engines: 12, ..SyntheticSpec::default() };
        prepare(&generate_synthetic(&spec).unwrap(), PipelineConfig::default()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("xgboost".parse::<ModelKind>().is_err());
    }

    #[test]
    fn classical_models_fit_and_reload() {
        let prep = prepared();
        let mut settings = ModelSettings::default();
        settings.gbdt.n_estimators = 30;
        for kind in [ModelKind::RawRidge, ModelKind::RidgeFe, ModelKind::PolyRidge, ModelKind::Gbdt] {
            let (model, report) = fit(kind, &prep, &settings).unwrap();
            assert!(report.is_none());
            assert_eq!(model.kind(), kind);
            let eval = evaluate(&model, &prep).unwrap();
            assert_eq!(eval.rows.len(), 12);
            assert!(eval.rmse.is_finite() && eval.rmse >= eval.mae);
            let TrainedModel::Classical(c) = &model else { unreachable!() };
            let back = TrainedModel::Classical(ClassicalModel::from_json(&c.to_json().unwrap()).unwrap());
            assert_eq!(evaluate(&back, &prep).unwrap(), eval);
        }
    }
}
