//! Single-layer LSTM with backpropagation through time.
//!
//! Gate layout along the `4H` axis is `[input, forget, candidate, output]`:
//! `z = x_t W_x + h_{t-1} W_h + b`, `i, f, o = σ(z)`, `g = tanh(z)`,
//! `c_t = f ⊙ c_{t-1} + i ⊙ g`, `h_t = o ⊙ tanh(c_t)`. State starts at zero.

use super::{gemm, Param, View};
use crate::error::{Result, RulError};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[n_in, 4H]`
    pub w_x: Param,
    /// `[H, 4H]`
    pub w_h: Param,
    /// `[4H]`
    pub b: Param,
}

/// Activations kept from `forward` for `backward`.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub batch: usize,
    pub steps: usize,
    x: Vec<f64>,
    /// Post-activation gates per step, `[T][B, 4H]`.
    gates: Vec<Vec<f64>>,
    /// Cell states `c_0..c_T`, each `[B, H]`.
    cells: Vec<Vec<f64>>,
    /// Hidden states `h_0..h_T`, each `[B, H]`.
    hidden: Vec<Vec<f64>>,
}

impl LstmCache {
    /// `h_T` for every batch row, `[B, H]`.
    pub fn last_hidden(&self) -> &[f64] {
        self.hidden.last().expect("at least the initial state")
    }

    /// Cell state after step `t` (1-based), `[B, H]`.
    pub fn cell(&self, t: usize) -> &[f64] {
        &self.cells[t]
    }

    /// Hidden state after step `t` (1-based), `[B, H]`.
    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.hidden[t]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    /// Matrices uniform in `±1/√H`; forget-gate bias 1, other biases 0.
    pub fn new(name: &str, inputs: usize, hidden: usize, rng: &mut StreamRng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_x = Param::uniform(&format!("{name}.w_x"), &[inputs, 4 * hidden], bound, true, rng);
        let w_h = Param::uniform(&format!("{name}.w_h"), &[hidden, 4 * hidden], bound, true, rng);
        let mut b = Param::zeros(&format!("{name}.bias"), &[4 * hidden], false);
        b.value_mut()[hidden..2 * hidden].fill(1.0);
        Self { w_x, w_h, b }
    }

    pub fn inputs(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.shape()[0]
    }

    /// Runs `x: [B, T, n_in]`. The returned cache holds every hidden state.
    pub fn forward(&self, x: &[f64], batch: usize, steps: usize) -> Result<LstmCache> {
        let (n, h) = (self.inputs(), self.hidden_size());
        if x.len() != batch * steps * n {
            return Err(RulError::structure(format!(
                "lstm: input of {} values does not match [{batch}, {steps}, {n}]",
                x.len()
            )));
        }
        let g4 = 4 * h;
        let mut cache = LstmCache {
            batch,
            steps,
            x: x.to_vec(),
            gates: Vec::with_capacity(steps),
            cells: vec![vec![0.0; batch * h]],
            hidden: vec![vec![0.0; batch * h]],
        };
        for t in 0..steps {
            let mut z: Vec<f64> = self.b.value().iter().copied().cycle().take(batch * g4).collect();
            let xt = View { data: &x[t * n..], rs: steps * n, cs: 1 };
            gemm(batch, n, g4, xt, View::rows(self.w_x.value(), g4), 1.0, &mut z);
            gemm(batch, h, g4, View::rows(&cache.hidden[t], h), View::rows(self.w_h.value(), g4), 1.0, &mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(RulError::Numeric(format!("lstm pre-activation is not finite at time step {}", t + 1)));
            }
            let c_prev = &cache.cells[t];
            let mut c = vec![0.0; batch * h];
            let mut hn = vec![0.0; batch * h];
            for bi in 0..batch {
                let zr = &mut z[bi * g4..(bi + 1) * g4];
                for u in 0..h {
                    let i = sigmoid(zr[u]);
                    let f = sigmoid(zr[h + u]);
                    let g = zr[2 * h + u].tanh();
                    let o = sigmoid(zr[3 * h + u]);
                    zr[u] = i;
                    zr[h + u] = f;
                    zr[2 * h + u] = g;
                    zr[3 * h + u] = o;
                    let cv = f * c_prev[bi * h + u] + i * g;
                    c[bi * h + u] = cv;
                    hn[bi * h + u] = o * cv.tanh();
                }
            }
            if hn.iter().chain(&c).any(|v| !v.is_finite()) {
                return Err(RulError::Numeric(format!("lstm activation is not finite at time step {}", t + 1)));
            }
            cache.gates.push(z);
            cache.cells.push(c);
            cache.hidden.push(hn);
        }
        Ok(cache)
    }

    /// All hidden states as `[B, T, H]`.
    pub fn hidden_sequence(&self, cache: &LstmCache) -> Vec<f64> {
        let (b, t, h) = (cache.batch, cache.steps, self.hidden_size());
        let mut out = vec![0.0; b * t * h];
        for s in 0..t {
            for bi in 0..b {
                out[(bi * t + s) * h..(bi * t + s + 1) * h]
                    .copy_from_slice(&cache.hidden[s + 1][bi * h..(bi + 1) * h]);
            }
        }
        out
    }

    /// BPTT. `dh` is the upstream gradient on every hidden state, `[B, T, H]`.
    /// Accumulates parameter gradients and returns `dx: [B, T, n_in]`.
    pub fn backward(&mut self, cache: &LstmCache, dh: &[f64]) -> Result<Vec<f64>> {
        let (n, h) = (self.inputs(), self.hidden_size());
        let (batch, steps) = (cache.batch, cache.steps);
        if dh.len() != batch * steps * h {
            return Err(RulError::structure("lstm: upstream gradient shape"));
        }
        let g4 = 4 * h;
        let mut dx = vec![0.0; batch * steps * n];
        let mut dh_next = vec![0.0; batch * h];
        let mut dc_next = vec![0.0; batch * h];
        let mut dz = vec![0.0; batch * g4];
        let mut dxt = vec![0.0; batch * n];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t];
            let c = &cache.cells[t + 1];
            let c_prev = &cache.cells[t];
            for bi in 0..batch {
                for u in 0..h {
                    let k = bi * h + u;
                    let gr = &gates[bi * g4..(bi + 1) * g4];
                    let (i, f, g, o) = (gr[u], gr[h + u], gr[2 * h + u], gr[3 * h + u]);
                    let tc = c[k].tanh();
                    let dht = dh[(bi * steps + t) * h + u] + dh_next[k];
                    let d_o = dht * tc;
                    let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
                    let di = dc * g;
                    let dg = dc * i;
                    let df = dc * c_prev[k];
                    dc_next[k] = dc * f;
                    let dzr = &mut dz[bi * g4..(bi + 1) * g4];
                    dzr[u] = di * i * (1.0 - i);
                    dzr[h + u] = df * f * (1.0 - f);
                    dzr[2 * h + u] = dg * (1.0 - g * g);
                    dzr[3 * h + u] = d_o * o * (1.0 - o);
                }
            }
            let xt = View { data: &cache.x[t * n..], rs: 1, cs: steps * n };
            gemm(n, batch, g4, xt, View::rows(&dz, g4), 1.0, self.w_x.grad_mut());
            gemm(h, batch, g4, View::trans(&cache.hidden[t], h), View::rows(&dz, g4), 1.0, self.w_h.grad_mut());
            for row in dz.chunks_exact(g4) {
                for (acc, v) in self.b.grad_mut().iter_mut().zip(row) {
                    *acc += v;
                }
            }
            gemm(batch, g4, n, View::rows(&dz, g4), View::trans(self.w_x.value(), g4), 0.0, &mut dxt);
            for bi in 0..batch {
                dx[(bi * steps + t) * n..(bi * steps + t + 1) * n].copy_from_slice(&dxt[bi * n..(bi + 1) * n]);
            }
            gemm(batch, g4, h, View::rows(&dz, g4), View::trans(self.w_h.value(), g4), 0.0, &mut dh_next);
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, HasParams};

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut rng = StreamRng::new(0, "lstm");
        let mut l = Lstm::new("l", 3, 4, &mut rng);
        for p in [&mut l.w_x, &mut l.w_h, &mut l.b] {
            p.value_mut().fill(0.0);
        }
        let x: Vec<f64> = (0..2 * 5 * 3).map(|v| v as f64 * 0.1).collect();
        let cache = l.forward(&x, 2, 5).unwrap();
        for t in 1..=5 {
            assert!(cache.hidden(t).iter().all(|&v| v == 0.0));
            assert!(cache.cell(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_cell_by_hand() {
        let mut rng = StreamRng::new(0, "lstm");
        let mut l = Lstm::new("l", 1, 1, &mut rng);
        // Gate order: input, forget, candidate, output.
        l.w_x.value_mut().copy_from_slice(&[0.5, -0.3, 0.8, 1.1]);
        l.w_h.value_mut().copy_from_slice(&[0.2, 0.4, -0.6, 0.1]);
        l.b.value_mut().copy_from_slice(&[0.1, 1.0, -0.2, 0.05]);
        let x = 0.7;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2).tanh();
        let o = s(1.1 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let cache = l.forward(&[x], 1, 1).unwrap();
        assert!((cache.hidden(1)[0] - h).abs() < 1e-15);
        assert!((cache.cell(1)[0] - c).abs() < 1e-15);
    }

    #[test]
    fn hidden_states_stay_in_unit_box() {
        let mut rng = StreamRng::new(3, "lstm");
        let mut l = Lstm::new("l", 4, 8, &mut rng);
        l.w_x.value_mut().iter_mut().for_each(|v| *v *= 20.0);
        let x: Vec<f64> = (0..3 * 30 * 4).map(|_| rng.symmetric(5.0)).collect();
        let cache = l.forward(&x, 3, 30).unwrap();
        assert!(l.hidden_sequence(&cache).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn overflow_names_time_step() {
        let mut rng = StreamRng::new(0, "lstm");
        let l = Lstm::new("l", 1, 2, &mut rng);
        let x = [0.1, 0.2, f64::INFINITY, 0.3];
        match l.forward(&x, 1, 4) {
            Err(RulError::Numeric(m)) => assert!(m.contains("step 3"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    struct Probe {
        lstm: Lstm,
        x: Param,
        batch: usize,
        steps: usize,
    }

    impl HasParams for Probe {
        fn params(&self) -> Vec<&Param> {
            vec![&self.lstm.w_x, &self.lstm.w_h, &self.lstm.b, &self.x]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.lstm.w_x, &mut self.lstm.w_h, &mut self.lstm.b, &mut self.x]
        }
    }

    fn coeffs(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 + (i as f64 * 0.61).cos()).collect()
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = StreamRng::new(5, "lstm.check");
        let lstm = Lstm::new("l", 3, 4, &mut rng);
        let x = Param::uniform("x", &[2, 5, 3], 1.0, false, &mut rng);
        let mut probe = Probe { lstm, x, batch: 2, steps: 5 };
        let loss = |p: &Probe| {
            let cache = p.lstm.forward(p.x.value(), p.batch, p.steps).unwrap();
            let hs = p.lstm.hidden_sequence(&cache);
            hs.iter().zip(coeffs(hs.len())).map(|(a, b)| a * b).sum::<f64>()
        };
        let report = grad_check(
            &mut probe,
            loss,
            |p| {
                let x = p.x.value().to_vec();
                let cache = p.lstm.forward(&x, p.batch, p.steps).unwrap();
                let dh = coeffs(p.batch * p.steps * 4);
                let dx = p.lstm.backward(&cache, &dh).unwrap();
                p.x.grad_mut().copy_from_slice(&dx);
            },
            1e-5,
            None,
        );
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}
