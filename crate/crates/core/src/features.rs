//! Per-window statistics and degree-2 polynomial expansion.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};
use crate::pipeline::{Scaler, WindowSet};

/// Statistics emitted per sensor, in column order.
pub const STATS: [&str; 5] = ["mean", "std", "last", "delta", "slope"];

/// Row-major `[n_rows, n_cols]` matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, values: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let n_cols = column_names.len();
        if values.len() != n_rows * n_cols {
            return Err(RulError::structure(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            column_names,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n_cols.max(1))
    }

    /// Fits a z-score scaler on these rows.
    pub fn fit_scaler(&self) -> Result<Scaler> {
        Scaler::fit_rows(&self.values, self.n_cols)
    }

    pub fn normalized(mut self, scaler: &Scaler) -> Result<Self> {
        if scaler.width() != self.n_cols {
            return Err(RulError::structure(format!(
                "scaler width {} vs {} feature columns",
                scaler.width(),
                self.n_cols
            )));
        }
        scaler.transform_rows(&mut self.values)?;
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{}", self.column_names.join(","))?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut names = None;
        let mut values = Vec::new();
        let mut n_rows = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            match names {
                None => names = Some(line.split(',').map(str::to_string).collect::<Vec<_>>()),
                Some(ref cols) => {
                    let before = values.len();
                    for f in line.split(',') {
                        values.push(f.parse::<f64>().map_err(|_| RulError::Parse {
                            line: i + 1,
                            msg: format!("non-numeric value '{f}'"),
                        })?);
                    }
                    if values.len() - before != cols.len() {
                        return Err(RulError::Parse { line: i + 1, msg: "wrong field count".into() });
                    }
                    n_rows += 1;
                }
            }
        }
        let names = names.ok_or_else(|| RulError::Parse { line: 1, msg: "missing header".into() })?;
        Self::new(n_rows, values, names)
    }
}

/// `[mean, std, last, delta, slope]` per sensor for one `[steps, n]` window.
///
/// `std` is the population deviation; `slope` is the least-squares slope
/// against step indices `0..steps`.
pub fn engineer_window_features(window: &[f64], n_sensors: usize) -> Vec<f64> {
    let steps = window.len() / n_sensors;
    let tf = steps as f64;
    let t_mean = (tf - 1.0) / 2.0;
    // Σ (t - t̄)² over 0..steps; 2247.5 for 30 steps.
    let t_ss = tf * (tf * tf - 1.0) / 12.0;
    let mut out = Vec::with_capacity(5 * n_sensors);
    for j in 0..n_sensors {
        let col = || (0..steps).map(|t| window[t * n_sensors + j]);
        let mean = col().sum::<f64>() / tf;
        let var = col().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tf;
        let first = window[j];
        let last = window[(steps - 1) * n_sensors + j];
        let cov: f64 = col().enumerate().map(|(t, v)| (t as f64 - t_mean) * (v - mean)).sum();
        let slope = if t_ss > 0.0 { cov / t_ss } else { 0.0 };
        out.extend_from_slice(&[mean, var.sqrt(), last, last - first, slope]);
    }
    out
}

pub fn engineered_column_names(sensor_names: &[String]) -> Vec<String> {
    sensor_names
        .iter()
        .flat_map(|s| STATS.iter().map(move |st| format!("{s}_{st}")))
        .collect()
}

/// Engineered features for every window of `set`.
pub fn engineer_features(set: &WindowSet, sensor_names: &[String]) -> Result<FeatureMatrix> {
    if sensor_names.len() != set.n_sensors {
        return Err(RulError::structure("sensor name count differs from window width"));
    }
    let values = (0..set.len())
        .flat_map(|i| engineer_window_features(set.get(i), set.n_sensors))
        .collect();
    FeatureMatrix::new(set.len(), values, engineered_column_names(sensor_names))
}

/// Raw mode: each window flattened time-major (step 1 sensors, then step 2, ...).
pub fn flatten_windows(set: &WindowSet, sensor_names: &[String]) -> Result<FeatureMatrix> {
    let names = (1..=set.window)
        .flat_map(|t| sensor_names.iter().map(move |s| format!("t{t}_{s}")))
        .collect();
    FeatureMatrix::new(set.len(), set.x.clone(), names)
}

/// Width after degree-2 expansion without a constant column.
pub fn poly2_width(d: usize) -> usize {
    d + d * (d + 1) / 2
}

/// Degree-1 terms followed by `x_i * x_j` for `i <= j` in lexicographic order.
pub fn polynomial_expand(f: &FeatureMatrix) -> FeatureMatrix {
    let d = f.n_cols;
    let width = poly2_width(d);
    let mut values = Vec::with_capacity(f.n_rows * width);
    for row in f.rows() {
        values.extend_from_slice(row);
        for i in 0..d {
            for j in i..d {
                values.push(row[i] * row[j]);
            }
        }
    }
    let mut names = f.column_names.clone();
    for i in 0..d {
        for j in i..d {
            if i == j {
                names.push(format!("{}^2", f.column_names[i]));
            } else {
                names.push(format!("{}*{}", f.column_names[i], f.column_names[j]));
            }
        }
    }
    FeatureMatrix {
        n_rows: f.n_rows,
        n_cols: width,
        values,
        column_names: names,
    }
}
