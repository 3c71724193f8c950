//! Prepared-data cache under `<out>/cache/<key>/`.
//!
//! The key hashes the subset, seed, pipeline parameters, window length and
//! a digest of the source (the three data files, or the synthetic spec).
//! `meta.json` is written last and marks a complete entry.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rul_core::cmapss::{generate_synthetic, parse_test, parse_train};
use rul_core::features::engineer_features;
use rul_core::pipeline::{prepare, PipelineConfig, Prepared};
use rul_core::{DatasetBundle, EngineSplit, Scaler, SensorSelection, SubsetId, WindowSet, WINDOW};
use serde::{Deserialize, Serialize};

use crate::config::{short_digest, ExperimentConfig, DATA_ROOT_ENV};
use crate::CliError;

const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    key: String,
    subset: SubsetId,
    pipeline: PipelineConfig,
    selection: SensorSelection,
    scaler: Scaler,
    split: EngineSplit,
}

fn data_files(cfg: &ExperimentConfig) -> Result<[PathBuf; 3], CliError> {
    let root = cfg.data_root.as_ref().ok_or_else(|| {
        CliError::Usage(format!("{} needs --data-root, data_root in the config, or {DATA_ROOT_ENV}", cfg.subset))
    })?;
    let s = cfg.subset;
    Ok([
        root.join(format!("train_{s}.txt")),
        root.join(format!("test_{s}.txt")),
        root.join(format!("RUL_{s}.txt")),
    ])
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Raw bytes of the three data files, or `None` for the synthetic subset.
fn read_sources(cfg: &ExperimentConfig) -> Result<Option<[Vec<u8>; 3]>, CliError> {
    if cfg.subset == SubsetId::SYNTH {
        return Ok(None);
    }
    let [a, b, c] = data_files(cfg)?;
    Ok(Some([read_file(&a)?, read_file(&b)?, read_file(&c)?]))
}

fn source_digest(cfg: &ExperimentConfig, sources: &Option<[Vec<u8>; 3]>) -> String {
    match sources {
        None => short_digest(serde_json::to_string(&cfg.synth).expect("spec serializes").as_bytes()),
        Some(files) => {
            let joined: Vec<String> = files.iter().map(|f| short_digest(f)).collect();
            short_digest(joined.join(",").as_bytes())
        }
    }
}

fn bundle_from(cfg: &ExperimentConfig, sources: Option<[Vec<u8>; 3]>) -> Result<DatasetBundle, CliError> {
    match sources {
        None => Ok(generate_synthetic(&cfg.synth)?),
        Some([train, test, rul]) => {
            let train = parse_train(&train)?;
            let (test, rul) = parse_test(&test, &rul)?;
            Ok(DatasetBundle::new(cfg.subset, train, test, rul)?)
        }
    }
}

/// The dataset named by the config, freshly loaded or generated.
pub fn load_bundle(cfg: &ExperimentConfig) -> Result<DatasetBundle, CliError> {
    let sources = read_sources(cfg)?;
    bundle_from(cfg, sources)
}

pub fn cache_key(cfg: &ExperimentConfig, source: &str) -> String {
    let v = serde_json::json!({
        "subset": cfg.subset,
        "seed": cfg.seed,
        "max_rul": cfg.pipeline.max_rul,
        "split_ratio": cfg.pipeline.split_ratio,
        "window": WINDOW,
        "source": source,
    });
    short_digest(v.to_string().as_bytes())
}

pub struct CacheEntry {
    pub dir: PathBuf,
    pub hit: bool,
    pub prepared: Prepared,
}

/// Loads the cached preparation for `cfg`, building it on a miss.
pub fn prepared(cfg: &ExperimentConfig) -> Result<CacheEntry, CliError> {
    let sources = read_sources(cfg)?;
    let key = cache_key(cfg, &source_digest(cfg, &sources));
    let dir = cfg.out.join("cache").join(&key);
    if dir.join("meta.json").is_file() {
        info!("cache hit: {}", dir.display());
        let prepared = read_entry(&dir, &key)?;
        return Ok(CacheEntry { dir, hit: true, prepared });
    }
    info!("cache miss: preparing {} into {}", cfg.subset, dir.display());
    let bundle = bundle_from(cfg, sources)?;
    let prepared = prepare(&bundle, cfg.pipeline_config())?;
    write_entry(&dir, &key, &prepared)?;
    Ok(CacheEntry { dir, hit: false, prepared })
}

fn sets(p: &Prepared) -> [&WindowSet; 3] {
    [&p.train, &p.val, &p.test]
}

fn write_entry(dir: &Path, key: &str, p: &Prepared) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let stamp = format!("cache_key={key}");
    let names = p.selection.names();
    for (name, set) in SPLITS.iter().zip(sets(p)) {
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}_windows.csv")))?);
        set.write_csv(&mut w, Some(&stamp))?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}_features.csv")))?);
        engineer_features(set, &names)?.write_csv(&mut w, Some(&stamp))?;
        w.flush()?;
    }
    let meta = CacheMeta {
        key: key.to_string(),
        subset: p.subset,
        pipeline: p.config,
        selection: p.selection.clone(),
        scaler: p.scaler.clone(),
        split: p.split.clone(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn read_entry(dir: &Path, key: &str) -> Result<Prepared, CliError> {
    let meta: CacheMeta = serde_json::from_slice(&read_file(&dir.join("meta.json"))?)?;
    if meta.key != key {
        return Err(CliError::Data(format!("cache entry {} holds key {}", dir.display(), meta.key)));
    }
    let read = |name: &str| -> Result<WindowSet, CliError> {
        let path = dir.join(format!("{name}_windows.csv"));
        let f = File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(WindowSet::read_csv(BufReader::new(f))?)
    };
    Ok(Prepared {
        subset: meta.subset,
        config: meta.pipeline,
        selection: meta.selection,
        scaler: meta.scaler,
        split: meta.split,
        train: read("train")?,
        val: read("val")?,
        test: read("test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig { out: out.to_path_buf(), ..ExperimentConfig::default() };
        c.synth.n_engines = 6;
        c
    }

    #[test]
    fn reload_equals_fresh_preparation() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path());
        let first = prepared(&cfg).unwrap();
        assert!(!first.hit);
        let second = prepared(&cfg).unwrap();
        assert!(second.hit);
        assert_eq!(first.dir, second.dir);
        let (a, b) = (&first.prepared, &second.prepared);
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        assert_eq!(a.scaler, b.scaler);
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn key_tracks_pipeline_inputs() {
        let cfg = ExperimentConfig::default();
        let k = cache_key(&cfg, "src");
        let mut c2 = cfg.clone();
        c2.pipeline.max_rul = 125;
        assert_ne!(k, cache_key(&c2, "src"));
        let mut c3 = cfg.clone();
        c3.seed = 43;
        assert_ne!(k, cache_key(&c3, "src"));
        assert_ne!(k, cache_key(&cfg, "other"));
        let mut c4 = cfg.clone();
        c4.model = rul_core::experiment::ModelKind::Lstm;
        c4.train.max_epochs = 3;
        assert_eq!(k, cache_key(&c4, "src"));
    }

    #[test]
    fn real_subset_without_root_is_usage_error() {
        let cfg = ExperimentConfig { subset: SubsetId::FD001, data_root: None, ..ExperimentConfig::default() };
        assert!(matches!(load_bundle(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_data_file_is_data_error() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            subset: SubsetId::FD001,
            data_root: Some(tmp.path().to_path_buf()),
            ..ExperimentConfig::default()
        };
        assert!(matches!(load_bundle(&cfg), Err(CliError::Data(_))));
    }
}
