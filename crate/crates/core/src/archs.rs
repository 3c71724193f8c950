//! The CNN and LSTM regressors and their shared training loop.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};
use crate::neural::layers::{dropout, mse_loss, relu, relu_backward, Conv1d, Dense};
use crate::neural::{Checkpoint, EarlyStopper, HasParams, Lstm, LstmCache, Param, PlateauScheduler, RmsProp, StopSignal};
use crate::pipeline::WindowSet;
use crate::rng::StreamRng;
use crate::WINDOW;

pub const CNN_DROPOUT: f64 = 0.3;
pub const LSTM_DROPOUT: f64 = 0.5;
pub const LSTM_HIDDEN: usize = 32;

/// A window regressor trainable by [`train`].
pub trait RulNet: HasParams + Clone {
    type Cache;

    fn n_sensors(&self) -> usize;

    /// `x` is `[B, WINDOW, n_sensors]`. Dropout is active iff `rng` is given.
    fn forward(&self, x: &[f64], batch: usize, rng: Option<&mut StreamRng>) -> Result<(Vec<f64>, Self::Cache)>;

    /// Accumulates parameter gradients for upstream `dpred: [B]`.
    fn backward(&mut self, cache: Self::Cache, dpred: &[f64]) -> Result<()>;

    fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, batch, None)?.0)
    }
}

fn check_input(x: &[f64], batch: usize, n: usize) -> Result<()> {
    if x.len() != batch * WINDOW * n {
        return Err(RulError::structure(format!(
            "expected [{batch}, {WINDOW}, {n}] input, got {} values",
            x.len()
        )));
    }
    Ok(())
}

fn apply_mask(g: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        g.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
    }
}

/// Conv(n→32)·ReLU·Drop → Conv(32→64)·ReLU·Drop → Conv(64→64)·ReLU →
/// Flatten(64×30) → Dense(1920→128)·ReLU·Drop → Dense(128→1).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub conv3: Conv1d,
    pub fc1: Dense,
    pub fc2: Dense,
}

pub struct CnnCache {
    batch: usize,
    cols: [Vec<f64>; 3],
    relu_out: [Vec<f64>; 4],
    masks: [Option<Vec<f64>>; 3],
    head_in: Vec<f64>,
}

pub fn build_cnn(n_sensors: usize, seed: u64) -> CnnModel {
    let r = |label: &str| StreamRng::new(seed, label);
    CnnModel {
        conv1: Conv1d::new("conv1", n_sensors, 32, &mut r("cnn.conv1")),
        conv2: Conv1d::new("conv2", 32, 64, &mut r("cnn.conv2")),
        conv3: Conv1d::new("conv3", 64, 64, &mut r("cnn.conv3")),
        fc1: Dense::new("fc1", 64 * WINDOW, 128, &mut r("cnn.fc1")),
        fc2: Dense::new("fc2", 128, 1, &mut r("cnn.fc2")),
    }
}

/// `[B, T, C]` → `[B, C, T]`.
pub fn to_channels_first(x: &[f64], batch: usize, steps: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for t in 0..steps {
            for c in 0..channels {
                out[(b * channels + c) * steps + t] = x[(b * steps + t) * channels + c];
            }
        }
    }
    out
}

impl CnnModel {
    /// Forward on windows already laid out `[B, n_sensors, WINDOW]`.
    pub fn forward_channels_first(
        &self,
        xt: &[f64],
        batch: usize,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<(Vec<f64>, CnnCache)> {
        let (mut a1, c1) = self.conv1.forward(xt, batch, WINDOW)?;
        relu(&mut a1);
        let r1 = a1.clone();
        let m1 = dropout(&mut a1, CNN_DROPOUT, rng.as_deref_mut());
        let (mut a2, c2) = self.conv2.forward(&a1, batch, WINDOW)?;
        relu(&mut a2);
        let r2 = a2.clone();
        let m2 = dropout(&mut a2, CNN_DROPOUT, rng.as_deref_mut());
        let (mut a3, c3) = self.conv3.forward(&a2, batch, WINDOW)?;
        relu(&mut a3);
        let mut z = self.fc1.forward(&a3, batch)?;
        relu(&mut z);
        let r4 = z.clone();
        let m3 = dropout(&mut z, CNN_DROPOUT, rng);
        let out = self.fc2.forward(&z, batch)?;
        Ok((
            out,
            CnnCache {
                batch,
                cols: [c1, c2, c3],
                relu_out: [r1, r2, a3, r4],
                masks: [m1, m2, m3],
                head_in: z,
            },
        ))
    }
}

impl HasParams for CnnModel {
    fn params(&self) -> Vec<&Param> {
        vec![
            &self.conv1.k, &self.conv1.b, &self.conv2.k, &self.conv2.b, &self.conv3.k,
            &self.conv3.b, &self.fc1.w, &self.fc1.b, &self.fc2.w, &self.fc2.b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.conv1.k, &mut self.conv1.b, &mut self.conv2.k, &mut self.conv2.b,
            &mut self.conv3.k, &mut self.conv3.b, &mut self.fc1.w, &mut self.fc1.b,
            &mut self.fc2.w, &mut self.fc2.b,
        ]
    }
}

impl RulNet for CnnModel {
    type Cache = CnnCache;

    fn n_sensors(&self) -> usize {
        self.conv1.c_in()
    }

    fn forward(&self, x: &[f64], batch: usize, rng: Option<&mut StreamRng>) -> Result<(Vec<f64>, CnnCache)> {
        check_input(x, batch, self.n_sensors())?;
        let xt = to_channels_first(x, batch, WINDOW, self.n_sensors());
        self.forward_channels_first(&xt, batch, rng)
    }

    fn backward(&mut self, cache: CnnCache, dpred: &[f64]) -> Result<()> {
        let b = cache.batch;
        let [c1, c2, c3] = &cache.cols;
        let [r1, r2, r3, r4] = &cache.relu_out;
        let [m1, m2, m3] = &cache.masks;
        let mut g = self.fc2.backward(&cache.head_in, dpred, b)?;
        apply_mask(&mut g, m3);
        relu_backward(r4, &mut g);
        let mut g = self.fc1.backward(r3, &g, b)?;
        relu_backward(r3, &mut g);
        let mut g = self.conv3.backward(c3, &g, b, WINDOW)?;
        apply_mask(&mut g, m2);
        relu_backward(r2, &mut g);
        let mut g = self.conv2.backward(c2, &g, b, WINDOW)?;
        apply_mask(&mut g, m1);
        relu_backward(r1, &mut g);
        self.conv1.backward(c1, &g, b, WINDOW)?;
        Ok(())
    }
}

/// LSTM(n→32) → h_T → Drop(0.5) → Dense(32→8)·ReLU → Dense(8→8)·ReLU → Dense(8→1).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub lstm: Lstm,
    pub fc1: Dense,
    pub fc2: Dense,
    pub fc3: Dense,
}

pub struct LstmModelCache {
    lstm: LstmCache,
    mask: Option<Vec<f64>>,
    h_last: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

pub fn build_lstm(n_sensors: usize, seed: u64) -> LstmModel {
    let r = |label: &str| StreamRng::new(seed, label);
    LstmModel {
        lstm: Lstm::new("lstm", n_sensors, LSTM_HIDDEN, &mut r("lstm.gates")),
        fc1: Dense::new("fc1", LSTM_HIDDEN, 8, &mut r("lstm.fc1")),
        fc2: Dense::new("fc2", 8, 8, &mut r("lstm.fc2")),
        fc3: Dense::new("fc3", 8, 1, &mut r("lstm.fc3")),
    }
}

impl LstmModel {
    /// `h_T` per window, `[B, 32]`, without dropout.
    pub fn final_hidden(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        check_input(x, batch, self.n_sensors())?;
        Ok(self.lstm.forward(x, batch, WINDOW)?.last_hidden().to_vec())
    }
}

impl HasParams for LstmModel {
    fn params(&self) -> Vec<&Param> {
        vec![
            &self.lstm.w_x, &self.lstm.w_h, &self.lstm.b, &self.fc1.w, &self.fc1.b,
            &self.fc2.w, &self.fc2.b, &self.fc3.w, &self.fc3.b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.lstm.w_x, &mut self.lstm.w_h, &mut self.lstm.b, &mut self.fc1.w,
            &mut self.fc1.b, &mut self.fc2.w, &mut self.fc2.b, &mut self.fc3.w, &mut self.fc3.b,
        ]
    }
}

impl RulNet for LstmModel {
    type Cache = LstmModelCache;

    fn n_sensors(&self) -> usize {
        self.lstm.inputs()
    }

    fn forward(&self, x: &[f64], batch: usize, rng: Option<&mut StreamRng>) -> Result<(Vec<f64>, LstmModelCache)> {
        check_input(x, batch, self.n_sensors())?;
        let lstm = self.lstm.forward(x, batch, WINDOW)?;
        let mut h_last = lstm.last_hidden().to_vec();
        let mask = dropout(&mut h_last, LSTM_DROPOUT, rng);
        let mut z1 = self.fc1.forward(&h_last, batch)?;
        relu(&mut z1);
        let mut z2 = self.fc2.forward(&z1, batch)?;
        relu(&mut z2);
        let out = self.fc3.forward(&z2, batch)?;
        Ok((out, LstmModelCache { lstm, mask, h_last, z1, z2 }))
    }

    fn backward(&mut self, c: LstmModelCache, dpred: &[f64]) -> Result<()> {
        let b = c.lstm.batch;
        let mut g = self.fc3.backward(&c.z2, dpred, b)?;
        relu_backward(&c.z2, &mut g);
        let mut g = self.fc2.backward(&c.z1, &g, b)?;
        relu_backward(&c.z1, &mut g);
        let mut g = self.fc1.backward(&c.h_last, &g, b)?;
        apply_mask(&mut g, &c.mask);
        let h = LSTM_HIDDEN;
        let mut dh = vec![0.0; b * WINDOW * h];
        for bi in 0..b {
            let dst = (bi * WINDOW + WINDOW - 1) * h;
            dh[dst..dst + h].copy_from_slice(&g[bi * h..(bi + 1) * h]);
        }
        self.lstm.backward(&c.lstm, &dh)?;
        Ok(())
    }
}

/// Either trained network, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuralModel {
    Cnn(CnnModel),
    Lstm(LstmModel),
}

impl NeuralModel {
    pub fn arch(&self) -> &'static str {
        match self {
            NeuralModel::Cnn(_) => "cnn",
            NeuralModel::Lstm(_) => "lstm",
        }
    }

    pub fn n_sensors(&self) -> usize {
        match self {
            NeuralModel::Cnn(m) => m.n_sensors(),
            NeuralModel::Lstm(m) => m.n_sensors(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            NeuralModel::Cnn(m) => m.params(),
            NeuralModel::Lstm(m) => m.params(),
        }
    }

    pub fn predict_rul(&self, windows: &WindowSet) -> Result<Vec<f64>> {
        match self {
            NeuralModel::Cnn(m) => predict_rul(m, windows),
            NeuralModel::Lstm(m) => predict_rul(m, windows),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            arch: self.arch().to_string(),
            meta: String::new(),
            n_inputs: self.n_sensors() as u32,
            tensors: self
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.shape().to_vec(), p.value().to_vec()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let n = ck.n_inputs as usize;
        let mut model = match ck.arch.as_str() {
            "cnn" => NeuralModel::Cnn(build_cnn(n, 0)),
            "lstm" => NeuralModel::Lstm(build_lstm(n, 0)),
            other => return Err(RulError::ModelType(format!("unknown architecture '{other}'"))),
        };
        let params = match &mut model {
            NeuralModel::Cnn(m) => m.params_mut(),
            NeuralModel::Lstm(m) => m.params_mut(),
        };
        if params.len() != ck.tensors.len() {
            return Err(RulError::structure("checkpoint tensor count does not match architecture"));
        }
        for (p, (name, shape, values)) in params.into_iter().zip(&ck.tensors) {
            if &p.name != name || p.shape() != shape.as_slice() {
                return Err(RulError::structure(format!(
                    "checkpoint tensor {name} {shape:?} does not match {} {:?}",
                    p.name,
                    p.shape()
                )));
            }
            p.value_mut().copy_from_slice(values);
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub rms_smoothing: f64,
    pub rms_eps: f64,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            rms_smoothing: 0.99,
            rms_eps: 1e-8,
            max_epochs: 200,
            plateau_factor: 0.5,
            plateau_patience: 5,
            plateau_threshold: 1e-4,
            early_stop_patience: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    /// Not part of the CSV; varies run to run.
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch - 1].val_loss
    }

    /// `epoch,train_loss,val_loss,lr`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "epoch,train_loss,val_loss,lr")?;
        for r in &self.history {
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
        }
        Ok(())
    }
}

const EVAL_BATCH: usize = 256;

fn gather(set: &WindowSet, idx: &[usize], x: &mut Vec<f64>, y: &mut Vec<f64>) {
    x.clear();
    y.clear();
    for &i in idx {
        x.extend_from_slice(set.get(i));
        y.push(set.y[i]);
    }
}

/// Inference over every window, dropout off, no clipping.
pub fn predict_rul<M: RulNet>(model: &M, windows: &WindowSet) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    if windows.n_sensors != model.n_sensors() || windows.window != WINDOW {
        return Err(RulError::structure(format!(
            "model takes [{WINDOW}, {}] windows, got [{}, {}]",
            model.n_sensors(),
            windows.window,
            windows.n_sensors
        )));
    }
    let mut out = Vec::with_capacity(windows.len());
    let w = windows.width();
    for (start, chunk) in windows.x.chunks(EVAL_BATCH * w).enumerate() {
        let b = chunk.len() / w;
        let p = model.predict(chunk, b)?;
        if let Some(i) = p.iter().position(|v| !v.is_finite()) {
            return Err(RulError::Numeric(format!("non-finite prediction for window {}", start * EVAL_BATCH + i)));
        }
        out.extend(p);
    }
    Ok(out)
}

fn mse_of(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Mini-batch RMSprop with plateau LR decay and early stopping; returns the
/// best-validation checkpoint.
pub fn train<M: RulNet>(mut model: M, train_set: &WindowSet, val_set: &WindowSet, cfg: &TrainConfig) -> Result<(M, TrainReport)> {
    if train_set.is_empty() {
        return Err(RulError::value("training set is empty"));
    }
    if val_set.is_empty() {
        return Err(RulError::value("validation set is empty"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(RulError::value("batch_size and max_epochs must be positive"));
    }
    let started = Instant::now();
    let mut shuffle_rng = StreamRng::new(cfg.seed, "train.shuffle");
    let mut dropout_rng = StreamRng::new(cfg.seed, "train.dropout");
    let mut opt = RmsProp::new(cfg.rms_smoothing, cfg.rms_eps, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold);
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience, cfg.max_epochs);
    let mut lr = cfg.learning_rate;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let (mut xb, mut yb) = (Vec::new(), Vec::new());

    loop {
        let epoch = history.len() + 1;
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            gather(train_set, idx, &mut xb, &mut yb);
            model.zero_grad();
            let (pred, cache) = model.forward(&xb, idx.len(), Some(&mut dropout_rng))?;
            let (loss, dpred) = mse_loss(&pred, &yb)?;
            if !loss.is_finite() {
                return Err(RulError::Numeric(format!("loss diverged at epoch {epoch}, batch {}", bi + 1)));
            }
            model.backward(cache, &dpred)?;
            opt.step(model.params_mut(), lr);
            total += loss * idx.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = mse_of(&predict_rul(&model, val_set)?, &val_set.y);
        if !val_loss.is_finite() {
            return Err(RulError::Numeric(format!("validation loss diverged at epoch {epoch}")));
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, lr });
        lr = sched.step(val_loss, lr);
        if stopper.step(val_loss, || model.snapshot()) == StopSignal::Stop {
            break;
        }
    }
    if let Some(best) = &stopper.best_checkpoint {
        model.restore(best);
    }
    let report = TrainReport {
        stopped_epoch: history.len(),
        best_epoch: stopper.best_epoch,
        history,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, GradCheck};

    const GRAD_FLOOR: f64 = 1e-6;

    #[test]
    fn parameter_counts() {
        assert_eq!(build_cnn(14, 42).param_count(), 265_953);
        let l = build_lstm(14, 42);
        let lstm: usize = l.params()[..3].iter().map(|p| p.tensor.len()).sum();
        assert_eq!(lstm, 6_016);
        assert_eq!(l.param_count(), 6_361);
    }

    #[test]
    fn output_shapes() {
        let x = vec![0.1; 8 * WINDOW * 14];
        assert_eq!(build_cnn(14, 1).predict(&x, 8).unwrap().len(), 8);
        let l = build_lstm(14, 1);
        assert_eq!(l.predict(&x, 8).unwrap().len(), 8);
        assert_eq!(l.final_hidden(&x, 8).unwrap().len(), 8 * 32);
        assert!(l.predict(&x[1..], 8).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(build_cnn(5, 42), build_cnn(5, 42));
        assert_eq!(build_lstm(5, 42), build_lstm(5, 42));
        assert_ne!(build_lstm(5, 42), build_lstm(5, 43));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let l = build_lstm(3, 0);
        let b = l.lstm.b.value();
        assert!(b[32..64].iter().all(|&v| v == 1.0));
        assert!(b[..32].iter().chain(&b[64..]).all(|&v| v == 0.0));
    }

    #[test]
    fn transposed_layout_agrees() {
        let n = 4;
        let mut rng = StreamRng::new(3, "x");
        let x: Vec<f64> = (0..3 * WINDOW * n).map(|_| rng.symmetric(1.0)).collect();
        let m = build_cnn(n, 7);
        let direct = m.predict(&x, 3).unwrap();
        let mut xt = vec![0.0; x.len()];
        for b in 0..3 {
            for t in 0..WINDOW {
                for c in 0..n {
                    xt[b * n * WINDOW + c * WINDOW + t] = x[b * WINDOW * n + t * n + c];
                }
            }
        }
        let via = m.forward_channels_first(&xt, 3, None).unwrap().0;
        assert_eq!(direct, via);
    }

    #[test]
    fn checkpoint_round_trip() {
        for model in [NeuralModel::Cnn(build_cnn(3, 1)), NeuralModel::Lstm(build_lstm(3, 1))] {
            let mut buf = Vec::new();
            model.to_checkpoint().write(&mut buf).unwrap();
            let back = NeuralModel::from_checkpoint(&Checkpoint::read(buf.as_slice()).unwrap()).unwrap();
            assert_eq!(back, model);
        }
    }

    fn random_batch(n: usize, batch: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = StreamRng::new(seed, "batch");
        let x = (0..batch * WINDOW * n).map(|_| rng.symmetric(1.5)).collect();
        let y = (0..batch).map(|_| rng.uniform() * 2.0).collect();
        (x, y)
    }

    fn check_full<M: RulNet>(mut model: M, n: usize, sample: Option<(usize, u64)>) -> GradCheck {
        let (x, y) = random_batch(n, 2, 11);
        let report = grad_check(
            &mut model,
            |m| mse_loss(&m.predict(&x, 2).unwrap(), &y).unwrap().0,
            |m| {
                let (pred, cache) = m.forward(&x, 2, None).unwrap();
                let (_, d) = mse_loss(&pred, &y).unwrap();
                m.backward(cache, &d).unwrap();
            },
            1e-5,
            sample,
        );
        assert!(report.n_checked > 0);
        report
    }

    /// Default init leaves many recurrent paths with gradients near 1e-12.
    /// Wider weights and positive head biases keep every unit connected.
    fn widened(mut m: LstmModel, seed: u64) -> LstmModel {
        let mut rng = StreamRng::new(seed, "widen");
        for p in m.params_mut() {
            p.value_mut().iter_mut().for_each(|v| *v = rng.symmetric(0.5));
        }
        m.fc1.b.value_mut().fill(1.0);
        m.fc2.b.value_mut().fill(1.0);
        m
    }

    #[test]
    fn full_lstm_gradient() {
        // Thirty-step recurrences cancel a few w_h coordinates down to
        // ~1e-8, where central differences carry ~1e-11 absolute noise.
        let report = check_full(widened(build_lstm(3, 5), 1), 3, None);
        let r = report.resolved(GRAD_FLOOR);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert!(r.max_abs_error_below <= 1e-9, "{r:?}");
        assert!(r.n_below * 20 < report.n_checked, "{r:?}");
    }

    #[test]
    fn full_cnn_gradient_sampled() {
        let err = check_full(build_cnn(3, 5), 3, Some((40, 1))).max_rel_error;
        assert!(err < 1e-5, "{err}");
    }
}
