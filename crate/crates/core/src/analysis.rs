//! LSTM hidden-state traces, the sequence-length ablation and CSV exports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::archs::{NeuralModel, LSTM_HIDDEN};
use crate::error::{Result, RulError};
use crate::metrics::{rmse, EvalReport};
use crate::pipeline::{make_windows, NormalizedSeries, WindowSet};
use crate::WINDOW;

/// Removals used for the standard ablation table.
pub const ABLATION_STEPS: [usize; 4] = [0, 5, 10, 15];

/// `h_T` per window, `[W, 32]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace {
    pub engine_id: Option<u32>,
    pub values: Vec<f64>,
}

impl HiddenTrace {
    pub fn n_windows(&self) -> usize {
        self.values.len() / LSTM_HIDDEN
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * LSTM_HIDDEN..(k + 1) * LSTM_HIDDEN]
    }

    /// `window,h1..h32`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let units: Vec<String> = (1..=LSTM_HIDDEN).map(|u| format!("h{u}")).collect();
        writeln!(w, "window,{}", units.join(","))?;
        for k in 0..self.n_windows() {
            let row: Vec<String> = self.row(k).iter().map(f64::to_string).collect();
            writeln!(w, "{k},{}", row.join(","))?;
        }
        Ok(())
    }
}

fn as_lstm(model: &NeuralModel) -> Result<&crate::archs::LstmModel> {
    match model {
        NeuralModel::Lstm(m) => Ok(m),
        other => Err(RulError::ModelType(format!("expected an lstm model, got {}", other.arch()))),
    }
}

/// The first `count` stride-1 windows of one engine (labels are zero).
pub fn trace_windows(series: &NormalizedSeries, count: usize) -> Result<WindowSet> {
    let labels = vec![0.0; series.len()];
    let all = make_windows(series, &labels, WINDOW, 1)?;
    if all.len() < count {
        return Err(RulError::value(format!(
            "engine {} yields {} windows, {count} requested",
            series.engine_id,
            all.len()
        )));
    }
    Ok(all.select(&(0..count).collect::<Vec<_>>()))
}

pub fn hidden_state_trace(model: &NeuralModel, windows: &WindowSet) -> Result<HiddenTrace> {
    let lstm = as_lstm(model)?;
    let values = if windows.is_empty() { Vec::new() } else { lstm.final_hidden(&windows.x, windows.len())? };
    let mut ids = windows.engine_of.clone();
    ids.dedup();
    Ok(HiddenTrace { engine_id: if ids.len() == 1 { Some(ids[0]) } else { None }, values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub removed: usize,
    pub rmse: f64,
}

/// Copy of `windows` with the oldest `k` steps of every window set to zero.
pub fn zero_oldest_steps(windows: &WindowSet, k: usize) -> Result<WindowSet> {
    if k >= windows.window {
        return Err(RulError::value(format!("cannot remove {k} of {} steps", windows.window)));
    }
    let mut out = windows.clone();
    let n = windows.n_sensors;
    for w in out.x.chunks_mut(windows.width()) {
        w[..k * n].fill(0.0);
    }
    Ok(out)
}

/// Test RMSE after blanking the `k` oldest steps, for each `k` in `removals`.
pub fn sequence_ablation(model: &NeuralModel, test: &WindowSet, removals: &[usize]) -> Result<Vec<AblationRow>> {
    as_lstm(model)?;
    removals
        .iter()
        .map(|&k| {
            let pred = model.predict_rul(&zero_oldest_steps(test, k)?)?;
            Ok(AblationRow { removed: k, rmse: rmse(&pred, &test.y)? })
        })
        .collect()
}

/// `steps_removed,rmse`.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut w: W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "steps_removed,rmse")?;
    for r in rows {
        writeln!(w, "{},{}", r.removed, r.rmse)?;
    }
    Ok(())
}

/// Per-engine rows as CSV, ordered by engine id.
pub fn export_predictions(report: &EvalReport, path: &Path, comment: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    report.write_rows_csv(&mut w, comment)?;
    w.flush()?;
    Ok(())
}

/// `<subset>_<model>_<what>.csv`.
pub fn output_name(subset: &str, model: &str, what: &str) -> String {
    format!("{subset}_{model}_{what}.csv")
}
