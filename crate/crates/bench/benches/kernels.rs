//! Hot paths: ridge fit, boosted-tree split search, conv and LSTM passes,
//! and one full-model training step per network.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rul_core::archs::{build_cnn, build_lstm, RulNet};
use rul_core::gbdt::find_best_split;
use rul_core::linmodel::fit_ridge;
use rul_core::neural::{Conv1d, Lstm};
use rul_core::rng::StreamRng;
use rul_core::{FeatureMatrix, WINDOW};

const BATCH: usize = 64;
const SENSORS: usize = 14;

fn noise(n: usize, label: &str) -> Vec<f64> {
    let mut rng = StreamRng::new(7, label);
    (0..n).map(|_| rng.symmetric(1.0)).collect()
}

fn matrix(rows: usize, cols: usize) -> FeatureMatrix {
    let names = (0..cols).map(|j| format!("f{j}")).collect();
    FeatureMatrix::new(rows, noise(rows * cols, "bench.x"), names).unwrap()
}

fn ridge(c: &mut Criterion) {
    // engineered width is 5 stats x 14 sensors
    let f = matrix(15_000, 70);
    let y = noise(15_000, "bench.y");
    c.bench_function("ridge_fit_15000x70", |b| b.iter(|| fit_ridge(black_box(&f), &y, 1.0).unwrap()));
    let raw = matrix(4_000, WINDOW * SENSORS);
    let y = noise(4_000, "bench.y");
    c.bench_function("ridge_fit_4000x420", |b| b.iter(|| fit_ridge(black_box(&raw), &y, 1.0).unwrap()));
}

fn gbdt_split(c: &mut Criterion) {
    let f = matrix(10_000, 70);
    let rows: Vec<usize> = (0..f.n_rows).collect();
    let grad = noise(f.n_rows, "bench.g");
    let hess = vec![1.0; f.n_rows];
    let feats: Vec<usize> = (0..56).collect();
    c.bench_function("gbdt_root_split_10000x56", |b| {
        b.iter(|| find_best_split(black_box(&f), &rows, &grad, &hess, &feats, 1.0, 1.0))
    });
}

fn conv(c: &mut Criterion) {
    let mut rng = StreamRng::new(7, "bench.conv");
    let layer = Conv1d::new("conv", 32, 64, &mut rng);
    let x = noise(BATCH * 32 * WINDOW, "bench.convx");
    c.bench_function("conv1d_32_64_forward", |b| b.iter(|| layer.forward(black_box(&x), BATCH, WINDOW).unwrap()));
    let (y, cols) = layer.forward(&x, BATCH, WINDOW).unwrap();
    c.bench_function("conv1d_32_64_backward", |b| {
        b.iter_batched(
            || layer.clone(),
            |mut l| l.backward(&cols, black_box(&y), BATCH, WINDOW).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn lstm(c: &mut Criterion) {
    let mut rng = StreamRng::new(7, "bench.lstm");
    let layer = Lstm::new("lstm", SENSORS, 32, &mut rng);
    let x = noise(BATCH * WINDOW * SENSORS, "bench.lstmx");
    c.bench_function("lstm_14_32_forward", |b| b.iter(|| layer.forward(black_box(&x), BATCH, WINDOW).unwrap()));
    let cache = layer.forward(&x, BATCH, WINDOW).unwrap();
    let dh = noise(BATCH * WINDOW * 32, "bench.dh");
    c.bench_function("lstm_14_32_backward", |b| {
        b.iter_batched(
            || layer.clone(),
            |mut l| l.backward(&cache, black_box(&dh)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn step<M: RulNet>(c: &mut Criterion, name: &str, model: M) {
    let x = noise(BATCH * WINDOW * SENSORS, "bench.stepx");
    let dpred = noise(BATCH, "bench.dpred");
    c.bench_function(name, |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| {
                m.zero_grad();
                let mut rng = StreamRng::new(7, "bench.dropout");
                let (_, cache) = m.forward(black_box(&x), BATCH, Some(&mut rng)).unwrap();
                m.backward(cache, &dpred).unwrap();
            },
            BatchSize::SmallInput,
        )
    });
}

fn models(c: &mut Criterion) {
    step(c, "cnn_train_step_b64", build_cnn(SENSORS, 42));
    step(c, "lstm_train_step_b64", build_lstm(SENSORS, 42));
}

criterion_group!(benches, ridge, gbdt_split, conv, lstm, models);
criterion_main!(benches);
