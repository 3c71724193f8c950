//! Shared preprocessing: capped RUL labels, sensor selection, z-scoring,
//! engine-level split and sliding windows.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cmapss::{DatasetBundle, EngineSeries, SubsetId};
use crate::error::{Result, RulError};
use crate::rng::StreamRng;
use crate::WINDOW;

/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;
/// Variance below which a synthetic sensor counts as constant.
pub const CONSTANT_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulConfig {
    pub max_rul: u32,
}

impl Default for RulConfig {
    fn default() -> Self {
        Self { max_rul: 130 }
    }
}

/// Piecewise-linear target: `min(L - t, max_rul)` at each cycle `t`.
pub fn compute_rul_labels(series: &EngineSeries, cfg: RulConfig) -> Vec<f64> {
    let last = series.last_cycle();
    series
        .rows()
        .iter()
        .map(|r| f64::from((last - r.cycle).min(cfg.max_rul)))
        .collect()
}

/// Kept sensors as 1-based indices (`s1..s21`), strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSelection {
    pub kept: Vec<usize>,
}

impl SensorSelection {
    pub fn new(kept: Vec<usize>) -> Result<Self> {
        if kept.is_empty() {
            return Err(RulError::value("sensor selection is empty"));
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) || kept[0] == 0 || *kept.last().unwrap() > crate::N_SENSORS {
            return Err(RulError::value("sensor indices must be strictly increasing within 1..=21"));
        }
        Ok(Self { kept })
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.kept.iter().map(|s| format!("s{s}")).collect()
    }
}

fn keep_all_but(dropped: &[usize]) -> Vec<usize> {
    (1..=crate::N_SENSORS).filter(|s| !dropped.contains(s)).collect()
}

/// FD001 drops s1,s5,s6,s10,s16,s18,s19; FD003 keeps s6. Synthetic data
/// drops any sensor whose training variance is below [`CONSTANT_VARIANCE`].
pub fn select_sensors(bundle: &DatasetBundle) -> SensorSelection {
    let kept = match bundle.subset {
        SubsetId::FD001 => keep_all_but(&[1, 5, 6, 10, 16, 18, 19]),
        SubsetId::FD003 => keep_all_but(&[1, 5, 10, 16, 18, 19]),
        SubsetId::SYNTH => (1..=crate::N_SENSORS)
            .filter(|&s| {
                let vals: Vec<f64> = bundle.train.iter().flat_map(|e| e.sensor(s)).collect();
                population_moments(&vals).1 >= CONSTANT_VARIANCE
            })
            .collect(),
    };
    SensorSelection { kept }
}

fn population_moments(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Per-column z-score parameters (population std, floored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Rows seen while fitting.
    pub n_rows: usize,
    /// Engines whose rows were used; empty when fitted on generic rows.
    pub fitted_engines: Vec<u32>,
}

impl Scaler {
    /// Fits column moments over row-major `rows` of width `n_cols`.
    pub fn fit_rows(rows: &[f64], n_cols: usize) -> Result<Self> {
        if n_cols == 0 || rows.is_empty() || !rows.len().is_multiple_of(n_cols) {
            return Err(RulError::structure(format!(
                "cannot fit scaler on {} values with width {n_cols}",
                rows.len()
            )));
        }
        let n = rows.len() / n_cols;
        let mut mean = vec![0.0; n_cols];
        for row in rows.chunks_exact(n_cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; n_cols];
        for row in rows.chunks_exact(n_cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self {
            mean,
            std,
            n_rows: n,
            fitted_engines: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// `(v - mean) / std` in place over row-major data.
    pub fn transform_rows(&self, rows: &mut [f64]) -> Result<()> {
        let w = self.width();
        if !rows.len().is_multiple_of(w) {
            return Err(RulError::structure(format!(
                "data length {} is not a multiple of scaler width {w}",
                rows.len()
            )));
        }
        for row in rows.chunks_exact_mut(w) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Fits the sensor scaler on every row of `train` (pass only training-split engines).
pub fn fit_scaler(train: &[EngineSeries], sel: &SensorSelection) -> Result<Scaler> {
    let rows: Vec<f64> = train.iter().flat_map(|e| select_rows(e, sel)).collect();
    let mut scaler = Scaler::fit_rows(&rows, sel.len())?;
    scaler.fitted_engines = train.iter().map(EngineSeries::engine_id).collect();
    Ok(scaler)
}

fn select_rows<'a>(e: &'a EngineSeries, sel: &'a SensorSelection) -> impl Iterator<Item = f64> + 'a {
    e.rows()
        .iter()
        .flat_map(move |r| sel.kept.iter().map(move |&s| r.sensors[s - 1]))
}

/// A series after z-scoring. Only [`apply_scaler`] constructs one, so a
/// scaler cannot be applied twice to the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub engine_id: u32,
    pub n_sensors: usize,
    /// Row-major `[len, n_sensors]`.
    values: Vec<f64>,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.values.len() / self.n_sensors
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row for 0-based step `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_sensors..(t + 1) * self.n_sensors]
    }
}

pub fn apply_scaler(scaler: &Scaler, series: &EngineSeries, sel: &SensorSelection) -> Result<NormalizedSeries> {
    if scaler.width() != sel.len() {
        return Err(RulError::structure(format!(
            "scaler fitted on {} sensors but selection has {}",
            scaler.width(),
            sel.len()
        )));
    }
    let mut values: Vec<f64> = select_rows(series, sel).collect();
    scaler.transform_rows(&mut values)?;
    Ok(NormalizedSeries {
        engine_id: series.engine_id(),
        n_sensors: sel.len(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSplit {
    /// Ascending.
    pub train_ids: Vec<u32>,
    /// Ascending.
    pub val_ids: Vec<u32>,
    pub seed: u64,
}

/// Seeded Fisher-Yates over ascending ids, then a prefix of
/// `round(ratio * n)` engines (clamped so both sides are nonempty) trains.
pub fn split_engines(ids: &[u32], ratio: f64, seed: u64) -> Result<EngineSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(RulError::value(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<u32> = ids.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.len() < 2 {
        return Err(RulError::value("need at least 2 engines to split"));
    }
    let n = order.len();
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    StreamRng::new(seed, "pipeline.split").shuffle(&mut order);
    let mut train_ids = order[..n_train].to_vec();
    let mut val_ids = order[n_train..].to_vec();
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    Ok(EngineSplit {
        train_ids,
        val_ids,
        seed,
    })
}

/// Stacked windows: `x` is `[N, window, n_sensors]` (time-major within a window).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub window: usize,
    pub n_sensors: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub engine_of: Vec<u32>,
}

impl WindowSet {
    pub fn empty(window: usize, n_sensors: usize) -> Self {
        Self {
            window,
            n_sensors,
            x: Vec::new(),
            y: Vec::new(),
            engine_of: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Values in one window.
    pub fn width(&self) -> usize {
        self.window * self.n_sensors
    }

    pub fn get(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn push(&mut self, window: &[f64], label: f64, engine: u32) {
        debug_assert_eq!(window.len(), self.width());
        self.x.extend_from_slice(window);
        self.y.push(label);
        self.engine_of.push(engine);
    }

    pub fn extend(&mut self, other: &WindowSet) -> Result<()> {
        if other.window != self.window || other.n_sensors != self.n_sensors {
            return Err(RulError::structure("window sets have different shapes"));
        }
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.engine_of.extend_from_slice(&other.engine_of);
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> WindowSet {
        let mut out = WindowSet::empty(self.window, self.n_sensors);
        for &i in idx {
            out.push(self.get(i), self.y[i], self.engine_of[i]);
        }
        out
    }

    /// CSV layout: optional `#` comment line, a shape line `N,window,n_sensors`,
    /// then per window the flattened values, the label and the engine id.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{},{},{}", self.len(), self.window, self.n_sensors)?;
        for i in 0..self.len() {
            let mut line = String::new();
            for v in self.get(i) {
                line.push_str(&v.to_string());
                line.push(',');
            }
            line.push_str(&format!("{},{}", self.y[i], self.engine_of[i]));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.starts_with('#') && !l.trim().is_empty()));
        let (ln, header) = lines
            .next()
            .ok_or_else(|| RulError::Parse { line: 1, msg: "missing shape line".into() })?;
        let header = header?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|f| f.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| RulError::Parse { line: ln + 1, msg: format!("bad shape line '{header}'") })?;
        let [n, window, n_sensors] = dims[..] else {
            return Err(RulError::Parse { line: ln + 1, msg: "shape line needs 3 fields".into() });
        };
        let mut out = WindowSet::empty(window, n_sensors);
        let width = window * n_sensors;
        let mut buf = Vec::with_capacity(width);
        for (ln, line) in lines {
            let line = line?;
            let bad = |msg: &str| RulError::Parse { line: ln + 1, msg: msg.into() };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width + 2 {
                return Err(bad("wrong field count"));
            }
            buf.clear();
            for f in &fields[..width] {
                buf.push(f.parse::<f64>().map_err(|_| bad("non-numeric value"))?);
            }
            let y = fields[width].parse::<f64>().map_err(|_| bad("non-numeric label"))?;
            let e = fields[width + 1].parse::<u32>().map_err(|_| bad("bad engine id"))?;
            out.push(&buf, y, e);
        }
        if out.len() != n {
            return Err(RulError::structure(format!("shape line says {n} windows, found {}", out.len())));
        }
        Ok(out)
    }
}

/// Stride windows over one normalized series. Window `k` covers steps
/// `k..k+size` and carries `labels[k + size - 1]`; series shorter than
/// `size` yield nothing.
pub fn make_windows(series: &NormalizedSeries, labels: &[f64], size: usize, stride: usize) -> Result<WindowSet> {
    if labels.len() != series.len() {
        return Err(RulError::structure(format!(
            "engine {}: {} labels for {} steps",
            series.engine_id,
            labels.len(),
            series.len()
        )));
    }
    if size == 0 || stride == 0 {
        return Err(RulError::value("window size and stride must be positive"));
    }
    let n = series.n_sensors;
    let mut out = WindowSet::empty(size, n);
    if series.len() < size {
        return Ok(out);
    }
    let mut start = 0;
    while start + size <= series.len() {
        out.push(
            &series.values[start * n..(start + size) * n],
            labels[start + size - 1],
            series.engine_id,
        );
        start += stride;
    }
    Ok(out)
}

/// The final `WINDOW` steps of each test engine, front-padded with zeros
/// (the training mean after z-scoring) when the engine is shorter. Labels
/// are the true RULs capped at `cfg.max_rul`.
pub fn make_test_windows(
    test: &[EngineSeries],
    test_rul: &[u32],
    sel: &SensorSelection,
    scaler: &Scaler,
    cfg: RulConfig,
) -> Result<WindowSet> {
    if test.len() != test_rul.len() {
        return Err(RulError::structure("test engines and labels differ in count"));
    }
    let n = sel.len();
    let mut out = WindowSet::empty(WINDOW, n);
    let mut buf = vec![0.0; WINDOW * n];
    for (series, &rul) in test.iter().zip(test_rul) {
        let norm = apply_scaler(scaler, series, sel)?;
        pad_last_window(&norm, &mut buf);
        out.push(&buf, f64::from(rul.min(cfg.max_rul)), series.engine_id());
    }
    Ok(out)
}

fn pad_last_window(norm: &NormalizedSeries, buf: &mut [f64]) {
    let n = norm.n_sensors;
    let len = norm.len();
    buf.fill(0.0);
    let take = len.min(WINDOW);
    let src = &norm.values[(len - take) * n..];
    buf[(WINDOW - take) * n..].copy_from_slice(src);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rul: RulConfig,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rul: RulConfig::default(),
            split_ratio: 0.8,
            seed: 42,
        }
    }
}

/// Everything downstream models consume, built from one bundle.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub subset: SubsetId,
    pub config: PipelineConfig,
    pub selection: SensorSelection,
    pub scaler: Scaler,
    pub split: EngineSplit,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

/// Runs the full preprocessing chain. The scaler only ever sees rows of
/// training-split engines.
pub fn prepare(bundle: &DatasetBundle, cfg: PipelineConfig) -> Result<Prepared> {
    let selection = select_sensors(bundle);
    if selection.is_empty() {
        return Err(RulError::value("no informative sensors in training data"));
    }
    let ids: Vec<u32> = bundle.train.iter().map(EngineSeries::engine_id).collect();
    let split = split_engines(&ids, cfg.split_ratio, cfg.seed)?;
    let train_engines: Vec<EngineSeries> = bundle
        .train
        .iter()
        .filter(|e| split.train_ids.binary_search(&e.engine_id()).is_ok())
        .cloned()
        .collect();
    let scaler = fit_scaler(&train_engines, &selection)?;

    let build = |wanted: &[u32]| -> Result<WindowSet> {
        let mut engines: Vec<&EngineSeries> = bundle
            .train
            .iter()
            .filter(|e| wanted.binary_search(&e.engine_id()).is_ok())
            .collect();
        engines.sort_by_key(|e| e.engine_id());
        let mut set = WindowSet::empty(WINDOW, selection.len());
        for e in engines {
            let norm = apply_scaler(&scaler, e, &selection)?;
            let labels = compute_rul_labels(e, cfg.rul);
            set.extend(&make_windows(&norm, &labels, WINDOW, 1)?)?;
        }
        Ok(set)
    };
    let train = build(&split.train_ids)?;
    let val = build(&split.val_ids)?;
    let test = make_test_windows(&bundle.test, &bundle.test_rul, &selection, &scaler, cfg.rul)?;
    Ok(Prepared {
        subset: bundle.subset,
        config: cfg,
        selection,
        scaler,
        split,
        train,
        val,
        test,
    })
}
