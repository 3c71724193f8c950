//! Central-difference gradient verification.

use super::HasParams;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
    pub entries: Vec<GradEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEntry {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Errors split at a gradient magnitude below which central differences
/// cannot resolve the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    /// Largest relative error over entries with `max(|a|, |n|) >= floor`.
    pub max_rel_error: f64,
    /// Largest `|a - n|` over the remaining entries.
    pub max_abs_error_below: f64,
    pub n_below: usize,
}

impl GradCheck {
    pub fn resolved(&self, floor: f64) -> Resolved {
        let mut r = Resolved { max_rel_error: 0.0, max_abs_error_below: 0.0, n_below: 0 };
        for e in &self.entries {
            if e.analytic.abs().max(e.numeric.abs()) >= floor {
                r.max_rel_error = r.max_rel_error.max(relative_error(e.analytic, e.numeric));
            } else {
                r.n_below += 1;
                r.max_abs_error_below = r.max_abs_error_below.max((e.analytic - e.numeric).abs());
            }
        }
        r
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `backprop`'s gradients with `(L(θ+ε) - L(θ-ε)) / 2ε`.
///
/// `backprop` must fill every parameter gradient for the same loss that
/// `loss` evaluates (grads are zeroed first). With `sample = Some((k, seed))`
/// at most `k` coordinates per parameter are checked, chosen at random.
pub fn grad_check<M: HasParams>(
    model: &mut M,
    loss: impl Fn(&M) -> f64,
    mut backprop: impl FnMut(&mut M),
    eps: f64,
    sample: Option<(usize, u64)>,
) -> GradCheck {
    model.zero_grad();
    backprop(model);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad().to_vec()).collect();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: 0,
        entries: Vec::new(),
    };
    for (pi, grads) in analytic.iter().enumerate() {
        let len = grads.len();
        let indices: Vec<usize> = match sample {
            Some((k, seed)) if k < len => {
                let mut rng = StreamRng::indexed(seed, "gradcheck", pi as u64);
                let mut all: Vec<usize> = (0..len).collect();
                rng.shuffle(&mut all);
                all.truncate(k);
                all
            }
            _ => (0..len).collect(),
        };
        for j in indices {
            let orig = model.params()[pi].value()[j];
            model.params_mut()[pi].value_mut()[j] = orig + eps;
            let lp = loss(model);
            model.params_mut()[pi].value_mut()[j] = orig - eps;
            let lm = loss(model);
            model.params_mut()[pi].value_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let err = relative_error(grads[j], numeric);
            report.n_checked += 1;
            report.entries.push(GradEntry { param: pi, index: j, analytic: grads[j], numeric });
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = model.params()[pi].name.clone();
                report.worst_index = j;
                report.analytic = grads[j];
                report.numeric = numeric;
            }
        }
    }
    report
}
