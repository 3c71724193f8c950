//! RMSE, MAE, R² and the asymmetric NASA score over one prediction per engine.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(RulError::structure(format!(
            "{} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(RulError::value("metrics need at least one prediction"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// `1 - SSE / SST`; a constant truth vector has no defined R².
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(RulError::value("R² is undefined for a constant target vector"));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - sse / sst)
}

/// Per-engine penalty for error `h = pred - truth`; late predictions
/// (`h > 0`) decay over 10 cycles, early ones over 13.
pub fn nasa_penalty(h: f64) -> f64 {
    if h < 0.0 {
        (-h / 13.0).exp_m1()
    } else {
        (h / 10.0).exp_m1()
    }
}

pub fn nasa_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| nasa_penalty(p - t)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRow {
    pub engine_id: u32,
    pub y_true: f64,
    pub y_pred: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub nasa_score: f64,
    pub rows: Vec<EngineRow>,
}

impl EvalReport {
    pub fn new(engine_ids: &[u32], pred: &[f64], truth: &[f64]) -> Result<Self> {
        check(pred, truth)?;
        if engine_ids.len() != pred.len() {
            return Err(RulError::structure("engine ids and predictions differ in count"));
        }
        let mut rows: Vec<EngineRow> = engine_ids
            .iter()
            .zip(pred.iter().zip(truth))
            .map(|(&engine_id, (&y_pred, &y_true))| EngineRow {
                engine_id,
                y_true,
                y_pred,
                h: y_pred - y_true,
            })
            .collect();
        rows.sort_by_key(|r| r.engine_id);
        Ok(Self {
            rmse: rmse(pred, truth)?,
            mae: mae(pred, truth)?,
            r2: r2(pred, truth)?,
            nasa_score: nasa_score(pred, truth)?,
            rows,
        })
    }

    /// The four summary metrics as a JSON object.
    pub fn summary_json(&self, extra: &[(&str, serde_json::Value)]) -> Result<String> {
        let mut obj = serde_json::Map::new();
        for (k, v) in extra {
            obj.insert((*k).to_string(), v.clone());
        }
        obj.insert("rmse".into(), self.rmse.into());
        obj.insert("mae".into(), self.mae.into());
        obj.insert("r2".into(), self.r2.into());
        obj.insert("nasa_score".into(), self.nasa_score.into());
        Ok(serde_json::to_string_pretty(&serde_json::Value::Object(obj))?)
    }

    /// `engine_id,y_true,y_pred,h` rows ordered by engine id.
    pub fn write_rows_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "engine_id,y_true,y_pred,h")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.engine_id, r.y_true, r.y_pred, r.h)?;
        }
        Ok(())
    }
}

pub fn read_rows_csv<R: std::io::BufRead>(r: R) -> Result<Vec<EngineRow>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let bad = || RulError::Parse { line: i + 1, msg: format!("bad prediction row '{line}'") };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        out.push(EngineRow {
            engine_id: f[0].parse().map_err(|_| bad())?,
            y_true: num(f[1])?,
            y_pred: num(f[2])?,
            h: num(f[3])?,
        });
    }
    Ok(out)
}
