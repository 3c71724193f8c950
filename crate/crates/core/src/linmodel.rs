//! Closed-form ridge regression with an unpenalized intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub alpha: f64,
    pub bias: f64,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub column_names: Vec<String>,
}

/// `C = Aᵀ A` for row-major `a` of shape `[n, d]`.
pub(crate) fn gram(a: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d * d];
    // SAFETY: the pointers cover `n * d` and `d * d` elements with the strides given.
    unsafe {
        matrixmultiply::dgemm(
            d, n, d, 1.0,
            a.as_ptr(), 1, d as isize,
            a.as_ptr(), d as isize, 1,
            0.0,
            c.as_mut_ptr(), d as isize, 1,
        );
    }
    c
}

/// In-place lower Cholesky factor of a symmetric `d x d` matrix.
fn cholesky(m: &mut [f64], d: usize) -> Result<()> {
    let max_diag = (0..d).map(|i| m[i * d + i].abs()).fold(0.0, f64::max);
    let tol = f64::EPSILON * d as f64 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..d {
        let row_j = &m[j * d..j * d + j];
        let diag = m[j * d + j] - row_j.iter().map(|v| v * v).sum::<f64>();
        if !(diag > tol) {
            return Err(RulError::Solver(format!(
                "normal matrix is not positive definite (pivot {diag:e} at column {j}); use alpha > 0"
            )));
        }
        let diag = diag.sqrt();
        m[j * d + j] = diag;
        for i in j + 1..d {
            let (upper, lower) = m.split_at_mut(i * d);
            let row_j = &upper[j * d..j * d + j];
            let row_i = &mut lower[..d];
            let s = row_i[j] - row_i[..j].iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
            row_i[j] = s / diag;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in i + 1..d {
            s -= l[k * d + i] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Minimizes `||F w + b - y||² + alpha ||w||²` via the normal equations on
/// column-centered features, factored with Cholesky.
pub fn fit_ridge(f: &FeatureMatrix, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    let (n, d) = (f.n_rows, f.n_cols);
    if n == 0 {
        return Err(RulError::value("ridge needs at least one row"));
    }
    if y.len() != n {
        return Err(RulError::structure(format!("{n} rows but {} targets", y.len())));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(RulError::value(format!("alpha {alpha} must be finite and >= 0")));
    }
    if f.values.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RulError::value("non-finite feature or target"));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut f_mean = vec![0.0; d];
    for row in f.rows() {
        for (m, v) in f_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    f_mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = f.values.clone();
    for row in centered.chunks_exact_mut(d.max(1)) {
        for (v, m) in row.iter_mut().zip(&f_mean) {
            *v -= m;
        }
    }
    let mut normal = gram(&centered, n, d);
    for i in 0..d {
        normal[i * d + i] += alpha;
    }
    let mut rhs = vec![0.0; d];
    for (row, yi) in centered.chunks_exact(d.max(1)).zip(y) {
        let r = yi - y_mean;
        for (acc, v) in rhs.iter_mut().zip(row) {
            *acc += v * r;
        }
    }
    if d > 0 {
        cholesky(&mut normal, d)?;
        cholesky_solve(&normal, d, &mut rhs);
    }
    let bias = y_mean - rhs.iter().zip(&f_mean).map(|(w, m)| w * m).sum::<f64>();
    if !bias.is_finite() || rhs.iter().any(|w| !w.is_finite()) {
        return Err(RulError::Numeric("ridge solution is not finite".into()));
    }
    Ok(RidgeModel {
        alpha,
        bias,
        weights: rhs,
        column_names: f.column_names.clone(),
    })
}

impl RidgeModel {
    pub fn predict(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        if f.n_cols != self.weights.len() {
            return Err(RulError::structure(format!(
                "model has {} weights but features have {} columns",
                self.weights.len(),
                f.n_cols
            )));
        }
        Ok(f
            .rows()
            .take(f.n_rows)
            .map(|row| self.bias + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
