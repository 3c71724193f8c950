use super::{gemm, Param, View};
use crate::error::{Result, RulError};
use crate::rng::StreamRng;

/// Glorot-uniform bound.
pub fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut StreamRng) -> Self {
        Self {
            w: Param::uniform(&format!("{name}.weight"), &[inputs, outputs], glorot(inputs, outputs), true, rng),
            b: Param::zeros(&format!("{name}.bias"), &[outputs], false),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape()[1]
    }

    fn check(&self, x: &[f64], batch: usize) -> Result<()> {
        if x.len() != batch * self.inputs() {
            return Err(RulError::structure(format!(
                "{}: input of {} values does not match [{batch}, {}]",
                self.w.name,
                x.len(),
                self.inputs()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check(x, batch)?;
        let (i, o) = (self.inputs(), self.outputs());
        let mut y: Vec<f64> = self.b.value().iter().copied().cycle().take(batch * o).collect();
        gemm(batch, i, o, View::rows(x, i), View::rows(self.w.value(), o), 1.0, &mut y);
        Ok(y)
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check(x, batch)?;
        let (i, o) = (self.inputs(), self.outputs());
        if dy.len() != batch * o {
            return Err(RulError::structure(format!("{}: upstream gradient shape", self.w.name)));
        }
        gemm(i, batch, o, View::trans(x, i), View::rows(dy, o), 1.0, self.w.grad_mut());
        let db = self.b.grad_mut();
        for row in dy.chunks_exact(o) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; batch * i];
        gemm(batch, o, i, View::rows(dy, o), View::trans(self.w.value(), o), 0.0, &mut dx);
        Ok(dx)
    }
}

/// Kernel-3, stride-1, same-padded 1D cross-correlation over `[B, C_in, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[C_out, C_in, 3]`.
    pub k: Param,
    pub b: Param,
}

pub const KERNEL: usize = 3;

impl Conv1d {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut StreamRng) -> Self {
        let bound = glorot(c_in * KERNEL, c_out * KERNEL);
        Self {
            k: Param::uniform(&format!("{name}.weight"), &[c_out, c_in, KERNEL], bound, true, rng),
            b: Param::zeros(&format!("{name}.bias"), &[c_out], false),
        }
    }

    pub fn c_out(&self) -> usize {
        self.k.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.k.shape()[1]
    }

    /// `cols[(c * 3 + k), t] = x[c, t + k - 1]`, zero outside the sequence.
    fn im2col(&self, x: &[f64], len: usize, cols: &mut [f64]) {
        let c_in = self.c_in();
        for c in 0..c_in {
            let xc = &x[c * len..(c + 1) * len];
            for k in 0..KERNEL {
                let row = &mut cols[(c * KERNEL + k) * len..(c * KERNEL + k + 1) * len];
                for (t, out) in row.iter_mut().enumerate() {
                    let src = t as isize + k as isize - 1;
                    *out = if src >= 0 && (src as usize) < len { xc[src as usize] } else { 0.0 };
                }
            }
        }
    }

    fn check(&self, x: &[f64], batch: usize, len: usize) -> Result<()> {
        if x.len() != batch * self.c_in() * len {
            return Err(RulError::structure(format!(
                "{}: input of {} values does not match [{batch}, {}, {len}]",
                self.k.name,
                x.len(),
                self.c_in()
            )));
        }
        Ok(())
    }

    /// Returns the output and the unfolded input columns for `backward`.
    pub fn forward(&self, x: &[f64], batch: usize, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x, batch, len)?;
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let ck = c_in * KERNEL;
        let mut cols = vec![0.0; batch * ck * len];
        let mut y = vec![0.0; batch * c_out * len];
        for b in 0..batch {
            let col = &mut cols[b * ck * len..(b + 1) * ck * len];
            self.im2col(&x[b * c_in * len..(b + 1) * c_in * len], len, col);
            let yb = &mut y[b * c_out * len..(b + 1) * c_out * len];
            for (o, row) in yb.chunks_exact_mut(len).enumerate() {
                row.fill(self.b.value()[o]);
            }
            gemm(c_out, ck, len, View::rows(self.k.value(), ck), View::rows(col, len), 1.0, yb);
        }
        Ok((y, cols))
    }

    pub fn backward(&mut self, cols: &[f64], dy: &[f64], batch: usize, len: usize) -> Result<Vec<f64>> {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let ck = c_in * KERNEL;
        if dy.len() != batch * c_out * len || cols.len() != batch * ck * len {
            return Err(RulError::structure(format!("{}: backward shape mismatch", self.k.name)));
        }
        let mut dx = vec![0.0; batch * c_in * len];
        let mut dcols = vec![0.0; ck * len];
        for b in 0..batch {
            let col = &cols[b * ck * len..(b + 1) * ck * len];
            let dyb = &dy[b * c_out * len..(b + 1) * c_out * len];
            gemm(c_out, len, ck, View::rows(dyb, len), View::trans(col, len), 1.0, self.k.grad_mut());
            for (g, row) in self.b.grad_mut().iter_mut().zip(dyb.chunks_exact(len)) {
                *g += row.iter().sum::<f64>();
            }
            gemm(ck, c_out, len, View::trans(self.k.value(), ck), View::rows(dyb, len), 0.0, &mut dcols);
            let dxb = &mut dx[b * c_in * len..(b + 1) * c_in * len];
            for c in 0..c_in {
                for k in 0..KERNEL {
                    let row = &dcols[(c * KERNEL + k) * len..(c * KERNEL + k + 1) * len];
                    for (t, g) in row.iter().enumerate() {
                        let dst = t as isize + k as isize - 1;
                        if dst >= 0 && (dst as usize) < len {
                            dxb[c * len + dst as usize] += g;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

pub fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `dy` where the ReLU output was zero.
pub fn relu_backward(out: &[f64], dy: &mut [f64]) {
    for (g, &o) in dy.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Inverted dropout. Returns the per-element scale (0 or `1/(1-p)`) that
/// was applied, or `None` when the call was the identity.
pub fn dropout(x: &mut [f64], p: f64, rng: Option<&mut StreamRng>) -> Option<Vec<f64>> {
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Some(mask)
}

/// Mean squared error and its gradient `2 (pred - target) / B`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(RulError::structure(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len().max(1) as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, HasParams};

    #[test]
    fn identity_dense() {
        let mut rng = StreamRng::new(0, "t");
        let mut d = Dense::new("d", 3, 3, &mut rng);
        d.w.value_mut().fill(0.0);
        for i in 0..3 {
            d.w.value_mut()[i * 3 + i] = 1.0;
        }
        let x = [1.0, -2.0, 3.5, 0.25, 4.0, -1.0];
        assert_eq!(d.forward(&x, 2).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = StreamRng::new(0, "t");
        let mut d = Dense::new("d", 4, 2, &mut rng);
        d.b.value_mut().copy_from_slice(&[1.5, -0.5]);
        assert_eq!(d.forward(&[0.0; 8], 2).unwrap(), vec![1.5, -0.5, 1.5, -0.5]);
        assert!(d.forward(&[0.0; 7], 2).is_err());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = StreamRng::new(0, "t");
        let mut c = Conv1d::new("c", 1, 1, &mut rng);
        c.k.value_mut().copy_from_slice(&[0.0, 1.0, 0.0]);
        let x: Vec<f64> = (0..30).map(|t| (t as f64).sin()).collect();
        assert_eq!(c.forward(&x, 1, 30).unwrap().0, x);
    }

    #[test]
    fn ones_kernel_shows_padding() {
        let mut rng = StreamRng::new(0, "t");
        let mut c = Conv1d::new("c", 1, 1, &mut rng);
        c.k.value_mut().fill(1.0);
        let (y, _) = c.forward(&[1.0; 30], 1, 30).unwrap();
        assert_eq!(y[0], 2.0);
        assert_eq!(y[29], 2.0);
        assert!(y[1..29].iter().all(|&v| v == 3.0));
    }

    #[test]
    fn dropout_identities() {
        let mut rng = StreamRng::new(0, "drop");
        let mut x = vec![1.0, 2.0, 3.0];
        assert!(dropout(&mut x, 0.0, Some(&mut rng)).is_none());
        assert!(dropout(&mut x, 0.5, None).is_none());
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = StreamRng::new(42, "drop");
        let mut x = vec![1.0; 1_000_000];
        dropout(&mut x, 0.3, Some(&mut rng));
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
        let zeros = x.iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.3).abs() < 0.005);
    }

    #[test]
    fn mse_values() {
        let (l, _) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        let (l, g) = mse_loss(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(l, 4.0);
        assert!(g.iter().all(|&v| (v - 4.0 / 3.0).abs() < 1e-15));
        assert!(mse_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let pred = [0.3, -1.2, 2.5, 0.0];
        let target = [1.0, -1.0, 2.0, 0.5];
        let (_, g) = mse_loss(&pred, &target).unwrap();
        for i in 0..4 {
            let eps = 1e-5;
            let mut p = pred;
            p[i] += eps;
            let lp = mse_loss(&p, &target).unwrap().0;
            p[i] -= 2.0 * eps;
            let lm = mse_loss(&p, &target).unwrap().0;
            let num = (lp - lm) / (2.0 * eps);
            assert!((num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8) < 1e-8);
        }
    }

    /// A layer plus its input, so input gradients are checked as parameters.
    struct DenseProbe {
        layer: Dense,
        x: Param,
        batch: usize,
    }

    impl HasParams for DenseProbe {
        fn params(&self) -> Vec<&Param> {
            vec![&self.layer.w, &self.layer.b, &self.x]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.layer.w, &mut self.layer.b, &mut self.x]
        }
    }

    fn weighted_sum(y: &[f64]) -> (f64, Vec<f64>) {
        let c: Vec<f64> = (0..y.len()).map(|i| 0.5 + (i as f64 * 0.37).sin()).collect();
        (y.iter().zip(&c).map(|(a, b)| a * b).sum(), c)
    }

    #[test]
    fn dense_gradients() {
        let mut rng = StreamRng::new(9, "dense");
        let layer = Dense::new("d", 3, 2, &mut rng);
        let x = Param::uniform("x", &[4, 3], 1.0, false, &mut rng);
        let mut probe = DenseProbe { layer, x, batch: 4 };
        let report = grad_check(
            &mut probe,
            |p| weighted_sum(&p.layer.forward(p.x.value(), p.batch).unwrap()).0,
            |p| {
                let x = p.x.value().to_vec();
                let y = p.layer.forward(&x, p.batch).unwrap();
                let (_, dy) = weighted_sum(&y);
                let dx = p.layer.backward(&x, &dy, p.batch).unwrap();
                p.x.grad_mut().copy_from_slice(&dx);
            },
            1e-5,
            None,
        );
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    struct ConvProbe {
        layer: Conv1d,
        x: Param,
        batch: usize,
        len: usize,
    }

    impl HasParams for ConvProbe {
        fn params(&self) -> Vec<&Param> {
            vec![&self.layer.k, &self.layer.b, &self.x]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.layer.k, &mut self.layer.b, &mut self.x]
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = StreamRng::new(10, "conv");
        let mut layer = Conv1d::new("c", 3, 4, &mut rng);
        layer.b.value_mut().iter_mut().for_each(|v| *v = rng.symmetric(0.5));
        let x = Param::uniform("x", &[2, 3, 7], 1.0, false, &mut rng);
        let mut probe = ConvProbe { layer, x, batch: 2, len: 7 };
        let report = grad_check(
            &mut probe,
            |p| weighted_sum(&p.layer.forward(p.x.value(), p.batch, p.len).unwrap().0).0,
            |p| {
                let x = p.x.value().to_vec();
                let (y, cols) = p.layer.forward(&x, p.batch, p.len).unwrap();
                let (_, dy) = weighted_sum(&y);
                let dx = p.layer.backward(&cols, &dy, p.batch, p.len).unwrap();
                p.x.grad_mut().copy_from_slice(&dx);
            },
            1e-5,
            None,
        );
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
