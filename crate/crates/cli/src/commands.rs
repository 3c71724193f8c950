//! Subcommand bodies. Each returns the paths it wrote.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rul_core::analysis::{
    export_predictions, hidden_state_trace, output_name, sequence_ablation, trace_windows, write_ablation_csv,
    ABLATION_STEPS,
};
use rul_core::cmapss::generate_synthetic;
use rul_core::experiment::{evaluate, fit, ClassicalModel, ModelKind, TrainedModel};
use rul_core::neural::Checkpoint;
use rul_core::pipeline::apply_scaler;
use rul_core::{NeuralModel, WINDOW};

use crate::cache::{load_bundle, prepared};
use crate::config::ExperimentConfig;
use crate::CliError;

/// Windows in the default hidden-state trace.
pub const TRACE_WINDOWS: usize = 150;

fn out_path(cfg: &ExperimentConfig, model: ModelKind, what: &str) -> PathBuf {
    cfg.out.join(output_name(&cfg.subset.to_string(), model.as_str(), what))
}

/// Default model file for the configured subset and model.
pub fn model_path(cfg: &ExperimentConfig, model: ModelKind) -> PathBuf {
    let ext = if model.is_neural() { "ckpt" } else { "json" };
    out_path(cfg, model, "model").with_extension(ext)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let entry = prepared(cfg)?;
    let p = &entry.prepared;
    info!(
        "{} ({}): {} sensors, {} train / {} val / {} test windows",
        cfg.subset,
        if entry.hit { "cached" } else { "built" },
        p.selection.len(),
        p.train.len(),
        p.val.len(),
        p.test.len()
    );
    Ok(vec![entry.dir])
}

pub fn train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let prep = prepared(cfg)?.prepared;
    info!("training {} on {} windows", cfg.model, prep.train.len());
    let (model, report) = fit(cfg.model, &prep, &cfg.model_settings())?;
    let path = model_path(cfg, cfg.model);
    let mut written = vec![path.clone()];
    match &model {
        TrainedModel::Classical(m) => {
            let doc = serde_json::json!({ "config_hash": cfg.hash(), "model": m });
            let mut w = create(&path)?;
            serde_json::to_writer(&mut w, &doc)?;
            w.flush()?;
        }
        TrainedModel::Neural(m) => {
            let mut ck = m.to_checkpoint();
            ck.meta = cfg.stamp();
            let mut w = create(&path)?;
            ck.write(&mut w)?;
            w.flush()?;
        }
    }
    if let Some(report) = report {
        let loss = out_path(cfg, cfg.model, "loss");
        let mut w = create(&loss)?;
        report.write_csv(&mut w, Some(&cfg.stamp()))?;
        w.flush()?;
        info!(
            "best epoch {} (val mse {:.4}), stopped at {}",
            report.best_epoch,
            report.best_val_loss(),
            report.stopped_epoch
        );
        written.push(loss);
    }
    Ok(written)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Checkpoint::read(BufReader::new(f))?)
}

/// Reads a `.ckpt` checkpoint or a classical JSON model file.
pub fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    if path.extension().is_some_and(|e| e == "ckpt") {
        return Ok(TrainedModel::Neural(NeuralModel::from_checkpoint(&read_checkpoint(path)?)?));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    let m = doc
        .get_mut("model")
        .map(serde_json::Value::take)
        .ok_or_else(|| CliError::Data(format!("{}: no 'model' entry", path.display())))?;
    Ok(TrainedModel::Classical(serde_json::from_value::<ClassicalModel>(m)?))
}

pub fn evaluate_cmd(cfg: &ExperimentConfig, model_file: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let path = model_file.map_or_else(|| model_path(cfg, cfg.model), Path::to_path_buf);
    let model = load_model(&path)?;
    let kind = model.kind();
    // the stamp names the model actually scored
    let cfg = &ExperimentConfig { model: kind, ..cfg.clone() };
    let prep = prepared(cfg)?.prepared;
    let report = evaluate(&model, &prep)?;
    info!(
        "{} {}: rmse {:.3} mae {:.3} r2 {:.3} score {:.1}",
        cfg.subset, kind, report.rmse, report.mae, report.r2, report.nasa_score
    );
    let json_path = out_path(cfg, kind, "report").with_extension("json");
    let mut w = create(&json_path)?;
    writeln!(w, "{}", report.summary_json(&[("config_hash", cfg.hash().into())])?)?;
    w.flush()?;
    let pred_path = out_path(cfg, kind, "predictions");
    export_predictions(&report, &pred_path, Some(&cfg.stamp()))?;
    Ok(vec![json_path, pred_path])
}

pub fn analyze(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    engine: Option<u32>,
    count: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let path = checkpoint.map_or_else(|| model_path(cfg, ModelKind::Lstm), Path::to_path_buf);
    let model = NeuralModel::from_checkpoint(&read_checkpoint(&path)?)?;
    if !matches!(model, NeuralModel::Lstm(_)) {
        return Err(CliError::Usage(format!("analyze needs an lstm checkpoint, {} holds {}", path.display(), model.arch())));
    }
    let cfg = &ExperimentConfig { model: ModelKind::Lstm, ..cfg.clone() };
    let prep = prepared(cfg)?.prepared;
    let bundle = load_bundle(cfg)?;
    let needed = count + WINDOW - 1;
    let series = match engine {
        Some(id) => bundle
            .train
            .iter()
            .find(|e| e.engine_id() == id)
            .ok_or_else(|| CliError::Usage(format!("engine {id} is not in the training file")))?,
        None => bundle
            .train
            .iter()
            .find(|e| e.len() >= needed)
            .ok_or_else(|| CliError::Usage(format!("no training engine has {needed} cycles")))?,
    };
    if series.len() < needed {
        return Err(CliError::Usage(format!(
            "engine {} has {} cycles, {count} windows need {needed}",
            series.engine_id(),
            series.len()
        )));
    }
    let norm = apply_scaler(&prep.scaler, series, &prep.selection)?;
    let trace = hidden_state_trace(&model, &trace_windows(&norm, count)?)?;
    info!("hidden trace: engine {}, {} windows", series.engine_id(), trace.n_windows());
    let stamp = format!("{} engine={}", cfg.stamp(), series.engine_id());
    let hidden = out_path(cfg, ModelKind::Lstm, "hidden");
    let mut w = create(&hidden)?;
    trace.write_csv(&mut w, Some(&stamp))?;
    w.flush()?;

    let rows = sequence_ablation(&model, &prep.test, &ABLATION_STEPS)?;
    for r in &rows {
        info!("ablation: {} steps removed, rmse {:.3}", r.removed, r.rmse);
    }
    let ablation = out_path(cfg, ModelKind::Lstm, "ablation");
    let mut w = create(&ablation)?;
    write_ablation_csv(&rows, &mut w, Some(&cfg.stamp()))?;
    w.flush()?;
    Ok(vec![hidden, ablation])
}

/// Writes `train_SYNTH.txt`, `test_SYNTH.txt`, `RUL_SYNTH.txt` and a
/// manifest. The data files stay comment-free so they parse as C-MAPSS.
pub fn synth(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let bundle = generate_synthetic(&cfg.synth)?;
    bundle.save_dir(dir)?;
    let manifest = dir.join("SYNTH_manifest.json");
    let doc = serde_json::json!({
        "config_hash": cfg.hash(),
        "spec": cfg.synth,
        "train_engines": bundle.train.len(),
        "test_engines": bundle.test.len(),
    });
    std::fs::write(&manifest, serde_json::to_string_pretty(&doc)? + "\n")?;
    info!("{} engines written to {}", bundle.train.len(), dir.display());
    let s = bundle.subset;
    Ok(vec![
        dir.join(format!("train_{s}.txt")),
        dir.join(format!("test_{s}.txt")),
        dir.join(format!("RUL_{s}.txt")),
        manifest,
    ])
}
