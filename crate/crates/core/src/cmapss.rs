//! C-MAPSS text format: parsing, serialization and a synthetic generator.
//!
//! A data row is 26 whitespace-separated numbers: engine id, cycle, three
//! operational settings and 21 sensor readings. Test trajectories are
//! truncated before failure and come with a separate file holding one true
//! RUL per line.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};
use crate::rng::StreamRng;
use crate::{N_SENSORS, N_SETTINGS};

const FIELDS: usize = 2 + N_SETTINGS + N_SENSORS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub engine_id: u32,
    pub cycle: u32,
    pub settings: [f64; N_SETTINGS],
    pub sensors: [f64; N_SENSORS],
}

/// One engine's trajectory; `rows[k].cycle == k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSeries {
    engine_id: u32,
    rows: Vec<RawRow>,
}

impl EngineSeries {
    pub fn new(engine_id: u32, rows: Vec<RawRow>) -> Result<Self> {
        if engine_id == 0 {
            return Err(RulError::value("engine id must be >= 1"));
        }
        if rows.is_empty() {
            return Err(RulError::structure(format!("engine {engine_id} has no rows")));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.engine_id != engine_id {
                return Err(RulError::structure(format!(
                    "engine {engine_id}: row {k} belongs to engine {}",
                    row.engine_id
                )));
            }
            if row.cycle as usize != k + 1 {
                return Err(RulError::structure(format!(
                    "engine {engine_id}: expected cycle {} but found {}",
                    k + 1,
                    row.cycle
                )));
            }
        }
        Ok(Self { engine_id, rows })
    }

    pub fn engine_id(&self) -> u32 {
        self.engine_id
    }

    pub fn rows(&self) -> &[RawRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Final observed cycle.
    pub fn last_cycle(&self) -> u32 {
        self.rows.len() as u32
    }

    /// Readings of one sensor (1-based name `s{sensor}`) over the whole series.
    pub fn sensor(&self, sensor: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.sensors[sensor - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum SubsetId {
    FD001,
    FD003,
    SYNTH,
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubsetId::FD001 => "FD001",
            SubsetId::FD003 => "FD003",
            SubsetId::SYNTH => "SYNTH",
        };
        f.write_str(s)
    }
}

impl FromStr for SubsetId {
    type Err = RulError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FD001" => Ok(SubsetId::FD001),
            "FD003" => Ok(SubsetId::FD003),
            "SYNTH" => Ok(SubsetId::SYNTH),
            other => Err(RulError::value(format!("unknown subset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub subset: SubsetId,
    pub train: Vec<EngineSeries>,
    pub test: Vec<EngineSeries>,
    /// True RUL at each test engine's final observed cycle.
    pub test_rul: Vec<u32>,
}

impl DatasetBundle {
    pub fn new(
        subset: SubsetId,
        train: Vec<EngineSeries>,
        test: Vec<EngineSeries>,
        test_rul: Vec<u32>,
    ) -> Result<Self> {
        if test.len() != test_rul.len() {
            return Err(RulError::structure(format!(
                "{} test engines but {} RUL labels",
                test.len(),
                test_rul.len()
            )));
        }
        if matches!(subset, SubsetId::FD001 | SubsetId::FD003)
            && (train.len() != 100 || test.len() != 100)
        {
            return Err(RulError::structure(format!(
                "{subset} expects 100 train and 100 test engines, found {} and {}",
                train.len(),
                test.len()
            )));
        }
        Ok(Self {
            subset,
            train,
            test,
            test_rul,
        })
    }

    /// Loads `train_<subset>.txt`, `test_<subset>.txt` and `RUL_<subset>.txt` from `dir`.
    pub fn load_dir(dir: &Path, subset: SubsetId) -> Result<Self> {
        let read = |name: String| -> Result<Vec<u8>> {
            let path = dir.join(&name);
            std::fs::read(&path).map_err(|e| {
                RulError::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })
        };
        let train = parse_train(&read(format!("train_{subset}.txt"))?)?;
        let (test, rul) = parse_test(
            &read(format!("test_{subset}.txt"))?,
            &read(format!("RUL_{subset}.txt"))?,
        )?;
        Self::new(subset, train, test, rul)
    }

    /// Writes the bundle in the same three-file layout `load_dir` reads.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let s = self.subset;
        std::fs::write(dir.join(format!("train_{s}.txt")), write_series(&self.train))?;
        std::fs::write(dir.join(format!("test_{s}.txt")), write_series(&self.test))?;
        std::fs::write(dir.join(format!("RUL_{s}.txt")), write_rul(&self.test_rul))?;
        Ok(())
    }
}

fn parse_rows(text: &[u8]) -> Result<Vec<(usize, RawRow)>> {
    let text = std::str::from_utf8(text).map_err(|e| RulError::Parse {
        line: 0,
        msg: format!("input is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != FIELDS {
            return Err(RulError::Parse {
                line: lineno,
                msg: format!("expected {FIELDS} fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; FIELDS];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|_| RulError::Parse {
                line: lineno,
                msg: format!("non-numeric field '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(RulError::Parse {
                    line: lineno,
                    msg: format!("non-finite field '{f}'"),
                });
            }
        }
        let as_index = |v: f64, what: &str| -> Result<u32> {
            if v.fract() != 0.0 || v < 1.0 || v > f64::from(u32::MAX) {
                return Err(RulError::Parse {
                    line: lineno,
                    msg: format!("{what} must be a positive integer, found {v}"),
                });
            }
            Ok(v as u32)
        };
        let mut settings = [0.0; N_SETTINGS];
        settings.copy_from_slice(&vals[2..2 + N_SETTINGS]);
        let mut sensors = [0.0; N_SENSORS];
        sensors.copy_from_slice(&vals[2 + N_SETTINGS..]);
        out.push((
            lineno,
            RawRow {
                engine_id: as_index(vals[0], "engine id")?,
                cycle: as_index(vals[1], "cycle")?,
                settings,
                sensors,
            },
        ));
    }
    Ok(out)
}

fn group_rows(rows: Vec<(usize, RawRow)>) -> Result<Vec<EngineSeries>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut current: Vec<RawRow> = Vec::new();
    let flush = |current: &mut Vec<RawRow>, out: &mut Vec<EngineSeries>| -> Result<()> {
        if let Some(first) = current.first() {
            let id = first.engine_id;
            out.push(EngineSeries::new(id, std::mem::take(current))?);
        }
        Ok(())
    };
    for (lineno, row) in rows {
        let same = current.last().is_some_and(|r| r.engine_id == row.engine_id);
        if !same {
            flush(&mut current, &mut out)?;
            if !seen.insert(row.engine_id) {
                return Err(RulError::structure(format!(
                    "engine {} reappears at line {lineno} after other engines",
                    row.engine_id
                )));
            }
        }
        let expected = current.len() as u32 + 1;
        if row.cycle != expected {
            return Err(RulError::structure(format!(
                "engine {}: non-consecutive cycle {} at line {lineno} (expected {expected})",
                row.engine_id, row.cycle
            )));
        }
        current.push(row);
    }
    flush(&mut current, &mut out)?;
    Ok(out)
}

/// Parses a run-to-failure training file into one series per engine.
pub fn parse_train(text: &[u8]) -> Result<Vec<EngineSeries>> {
    group_rows(parse_rows(text)?)
}

/// Parses a truncated test file together with its RUL label file.
pub fn parse_test(data_text: &[u8], rul_text: &[u8]) -> Result<(Vec<EngineSeries>, Vec<u32>)> {
    let series = group_rows(parse_rows(data_text)?)?;
    let rul = parse_rul(rul_text)?;
    if rul.len() != series.len() {
        return Err(RulError::structure(format!(
            "{} test engines but {} RUL labels",
            series.len(),
            rul.len()
        )));
    }
    Ok((series, rul))
}

fn parse_rul(text: &[u8]) -> Result<Vec<u32>> {
    let text = std::str::from_utf8(text).map_err(|e| RulError::Parse {
        line: 0,
        msg: format!("RUL file is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| RulError::Parse {
            line: i + 1,
            msg: format!("RUL label '{t}' is not an integer"),
        })?;
        if v < 0 {
            return Err(RulError::value(format!("negative RUL label {v} at line {}", i + 1)));
        }
        let v = u32::try_from(v)
            .map_err(|_| RulError::value(format!("RUL label {v} out of range at line {}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Serializes series in the 26-column text layout.
pub fn write_series(series: &[EngineSeries]) -> String {
    let mut s = String::new();
    for e in series {
        for r in e.rows() {
            write!(s, "{} {}", r.engine_id, r.cycle).unwrap();
            for v in r.settings.iter().chain(r.sensors.iter()) {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_rul(labels: &[u32]) -> String {
    labels.iter().map(|v| format!("{v}\n")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftKind {
    Linear,
    Exponential,
    /// Even sensors drift linearly, odd sensors exponentially.
    Mixed,
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_engines: usize,
    /// Sensors `s1..s{n_sensors}` carry signal; the rest are emitted constant.
    pub n_sensors: usize,
    pub min_life: u32,
    pub max_life: u32,
    pub noise_std: f64,
    pub seed: u64,
    /// 1-based sensors (within `1..=n_sensors`) emitted constant.
    pub constant_sensors: Vec<usize>,
    pub drift: DriftKind,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_engines: 20,
            n_sensors: 14,
            min_life: 128,
            max_life: 362,
            noise_std: 0.05,
            seed: 42,
            constant_sensors: vec![3, 8],
            drift: DriftKind::Mixed,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_engines == 0 {
            return Err(RulError::value("n_engines must be positive"));
        }
        if self.n_sensors == 0 || self.n_sensors > N_SENSORS {
            return Err(RulError::value(format!("n_sensors must be in 1..={N_SENSORS}")));
        }
        if self.min_life < 2 || self.min_life > self.max_life {
            return Err(RulError::value("need 2 <= min_life <= max_life"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(RulError::value("noise_std must be finite and nonnegative"));
        }
        if let Some(&s) = self
            .constant_sensors
            .iter()
            .find(|&&s| s == 0 || s > self.n_sensors)
        {
            return Err(RulError::value(format!("constant sensor s{s} outside 1..={}", self.n_sensors)));
        }
        Ok(())
    }
}

const EXP_RATE: f64 = 3.0;

fn synth_engine(spec: &SyntheticSpec, role: &str, engine_id: u32) -> Result<(EngineSeries, u32)> {
    let mut rng = StreamRng::indexed(spec.seed, &format!("synth.{role}"), u64::from(engine_id));
    let life = rng.int_inclusive(u64::from(spec.min_life), u64::from(spec.max_life)) as u32;
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise_std");

    let mut offsets = [0.0; N_SENSORS];
    let mut amps = [0.0; N_SENSORS];
    for j in 0..spec.n_sensors {
        offsets[j] = rng.symmetric(0.5);
        let sign = if j % 3 == 1 { -1.0 } else { 1.0 };
        amps[j] = sign * (2.0 + rng.uniform());
    }

    let rows = (1..=life)
        .map(|cycle| {
            let u = f64::from(cycle) / f64::from(life);
            let mut sensors = [0.0; N_SENSORS];
            for (j, s) in sensors.iter_mut().enumerate() {
                let base = 50.0 + 10.0 * j as f64;
                if j >= spec.n_sensors || spec.constant_sensors.contains(&(j + 1)) {
                    *s = base;
                    continue;
                }
                let exponential = match spec.drift {
                    DriftKind::Linear => false,
                    DriftKind::Exponential => true,
                    DriftKind::Mixed => j % 2 == 1,
                };
                let ramp = if exponential {
                    ((EXP_RATE * u).exp() - 1.0) / (EXP_RATE.exp() - 1.0)
                } else {
                    u
                };
                let eps = if spec.noise_std > 0.0 {
                    noise.sample(rng.inner_mut())
                } else {
                    0.0
                };
                *s = base + offsets[j] + amps[j] * ramp + eps;
            }
            RawRow {
                engine_id,
                cycle,
                settings: [0.0, 0.0, 100.0],
                sensors,
            }
        })
        .collect::<Vec<_>>();

    if role == "train" {
        return Ok((EngineSeries::new(engine_id, rows)?, 0));
    }
    let lo = (life / 10).max(1);
    let cut = rng.int_inclusive(u64::from(lo), u64::from(life - 1)) as u32;
    let truncated = rows.into_iter().take(cut as usize).collect();
    Ok((EngineSeries::new(engine_id, truncated)?, life - cut))
}

/// Seeded run-to-failure data with monotone sensor drift.
///
/// Each engine's life is uniform in `[min_life, max_life]`; drifting sensors
/// follow `base + offset + amp * ramp(cycle / life) + noise`. Test engines
/// are truncated at a uniform cycle in `[life / 10, life - 1]` and labeled
/// with the cycles left.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let n = spec.n_engines as u32;
    let train = (1..=n)
        .map(|id| synth_engine(spec, "train", id).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    let mut test = Vec::with_capacity(spec.n_engines);
    let mut test_rul = Vec::with_capacity(spec.n_engines);
    for id in 1..=n {
        let (s, rul) = synth_engine(spec, "test", id)?;
        test.push(s);
        test_rul.push(rul);
    }
    DatasetBundle::new(SubsetId::SYNTH, train, test, test_rul)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_text(engine: u32, cycle: u32) -> String {
        let mut s = format!("{engine} {cycle}");
        for k in 0..24 {
            write!(s, " {}", 0.5 * k as f64 + f64::from(cycle)).unwrap();
        }
        s
    }

    #[test]
    fn two_row_file_gives_one_series() {
        let text = format!("{}\n{}\n", row_text(1, 1), row_text(1, 2));
        let series = parse_train(text.as_bytes()).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].len(), 2);
        assert_eq!(series[0].rows()[1].sensors[0], 3.5);
    }

    #[test]
    fn short_row_reports_line_number() {
        let bad: String = row_text(1, 2).rsplit_once(' ').unwrap().0.to_string();
        let text = format!("{}\n{bad}\n", row_text(1, 1));
        match parse_train(text.as_bytes()) {
            Err(RulError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_is_a_parse_error() {
        let text = row_text(1, 1).replace(" 1.5 ", " x ");
        assert!(matches!(parse_train(text.as_bytes()), Err(RulError::Parse { line: 1, .. })));
    }

    #[test]
    fn gap_in_cycles_names_engine() {
        let text = format!("{}\n{}\n", row_text(7, 1), row_text(7, 3));
        let err = parse_train(text.as_bytes()).unwrap_err();
        assert!(matches!(err, RulError::Structure(ref m) if m.contains("engine 7")), "{err}");
    }

    #[test]
    fn tabs_blank_lines_and_trailing_space_are_tolerated() {
        let text = format!("\n{}  \t\n\n{}\t\n", row_text(3, 1).replace(' ', "\t"), row_text(3, 2));
        let series = parse_train(text.as_bytes()).unwrap();
        assert_eq!(series[0].engine_id(), 3);
        assert_eq!(series[0].len(), 2);
    }

    #[test]
    fn test_labels_attach_in_order() {
        let data = format!("{}\n{}\n{}\n", row_text(1, 1), row_text(2, 1), row_text(2, 2));
        let (series, rul) = parse_test(data.as_bytes(), b"112\n98\n").unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(rul, vec![112, 98]);
    }

    #[test]
    fn label_count_mismatch_is_structural() {
        let data = format!("{}\n{}\n", row_text(1, 1), row_text(2, 1));
        let err = parse_test(data.as_bytes(), b"1\n2\n3\n").unwrap_err();
        assert!(matches!(err, RulError::Structure(_)));
    }

    #[test]
    fn negative_label_is_value_error() {
        let data = format!("{}\n", row_text(1, 1));
        let err = parse_test(data.as_bytes(), b"-4\n").unwrap_err();
        assert!(matches!(err, RulError::Value(_)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n_engines: 5,
            seed: 7,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(write_series(&a.train), write_series(&b.train));
    }

    #[test]
    fn synthetic_seed_changes_data() {
        let a = generate_synthetic(&SyntheticSpec { seed: 1, ..Default::default() }).unwrap();
        let b = generate_synthetic(&SyntheticSpec { seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn fixed_life_gives_fixed_length() {
        let spec = SyntheticSpec {
            min_life: 50,
            max_life: 50,
            ..Default::default()
        };
        let b = generate_synthetic(&spec).unwrap();
        assert!(b.train.iter().all(|s| s.len() == 50));
        for (s, rul) in b.test.iter().zip(&b.test_rul) {
            assert_eq!(s.len() as u32 + rul, 50);
        }
    }

    #[test]
    fn noiseless_linear_drift_is_affine() {
        let spec = SyntheticSpec {
            n_engines: 3,
            noise_std: 0.0,
            drift: DriftKind::Linear,
            ..Default::default()
        };
        let b = generate_synthetic(&spec).unwrap();
        for e in &b.train {
            for j in 1..=spec.n_sensors {
                let v: Vec<f64> = e.sensor(j).collect();
                let step = v[1] - v[0];
                for t in 0..v.len() {
                    let affine = v[0] + step * t as f64;
                    assert!((v[t] - affine).abs() < 1e-9, "engine {} s{j} t{t}", e.engine_id());
                }
            }
        }
    }

    #[test]
    fn bad_spec_is_rejected() {
        let spec = SyntheticSpec {
            min_life: 60,
            max_life: 50,
            ..Default::default()
        };
        assert!(generate_synthetic(&spec).is_err());
        let spec = SyntheticSpec {
            n_sensors: 22,
            ..Default::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn bundle_round_trips_through_text() {
        let b = generate_synthetic(&SyntheticSpec { n_engines: 4, ..Default::default() }).unwrap();
        let train = parse_train(write_series(&b.train).as_bytes()).unwrap();
        let (test, rul) =
            parse_test(write_series(&b.test).as_bytes(), write_rul(&b.test_rul).as_bytes()).unwrap();
        let again = DatasetBundle::new(SubsetId::SYNTH, train, test, rul).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn reappearing_engine_is_rejected() {
        let text = format!("{}\n{}\n{}\n", row_text(1, 1), row_text(2, 1), row_text(1, 2));
        assert!(matches!(parse_train(text.as_bytes()), Err(RulError::Structure(_))));
    }
}
