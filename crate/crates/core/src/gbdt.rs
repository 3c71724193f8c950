//! Gradient-boosted regression trees with exact greedy splits.
//!
//! Squared-error boosting: each round fits a tree to `g = pred - y`, `h = 1`
//! using the second-order gain
//! `½·[GL²/(HL+λ) + GR²/(HR+λ) - (GL+GR)²/(HL+HR+λ)]` and leaf weights
//! `-G/(H+λ)`. Rows and columns are subsampled without replacement from a
//! stream keyed by `(seed, round)`, and the validation RMSE after every
//! round drives early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RulError};
use crate::features::FeatureMatrix;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub early_stopping_patience: usize,
    pub lambda_l2: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 500,
            max_depth: 6,
            learning_rate: 0.05,
            subsample: 0.8,
            colsample_bytree: 0.8,
            early_stopping_patience: 20,
            lambda_l2: 1.0,
            min_child_weight: 1.0,
            seed: 42,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |v: f64| v > 0.0 && v <= 1.0;
        if !rate(self.learning_rate) || !rate(self.subsample) || !rate(self.colsample_bytree) {
            return Err(RulError::value("learning_rate, subsample and colsample_bytree must be in (0, 1]"));
        }
        if self.max_depth == 0 {
            return Err(RulError::value("max_depth must be >= 1"));
        }
        if !(self.lambda_l2 >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(RulError::value("lambda_l2 and min_child_weight must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { weight: f64 },
}

/// Flat node array; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { weight } => return weight,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { weight } => Some(*weight),
            TreeNode::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Number of leading trees used for prediction.
    pub best_round: usize,
    /// Validation RMSE after each round (index `m` = `m + 1` trees).
    pub val_rmse: Vec<f64>,
    /// RMSE on all training rows after each round.
    pub train_rmse: Vec<f64>,
}

impl GbdtModel {
    pub fn predict(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        if f.n_cols != self.n_features {
            return Err(RulError::structure(format!(
                "model expects {} features, got {}",
                self.n_features, f.n_cols
            )));
        }
        Ok((0..f.n_rows).map(|i| self.predict_row(f.row(i))).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.trees[..self.best_round]
                .iter()
                .map(|t| self.learning_rate * t.eval(row))
                .sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Scans one feature's rows (sorted ascending by value) and updates `best`
/// when a strictly larger gain appears, so earlier features and lower
/// thresholds win ties.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &FeatureMatrix,
    feature: usize,
    sorted: &[usize],
    grad: &[f64],
    hess: &[f64],
    totals: (f64, f64),
    lambda: f64,
    min_child_weight: f64,
    best: &mut Option<Split>,
) {
    let (g_tot, h_tot) = totals;
    let parent = score(g_tot, h_tot, lambda);
    let value = |r: usize| x.values[r * x.n_cols + feature];
    let (mut gl, mut hl) = (0.0, 0.0);
    for w in sorted.windows(2) {
        let (r, next) = (w[0], w[1]);
        gl += grad[r];
        hl += hess[r];
        let (v, nv) = (value(r), value(next));
        if v == nv {
            continue;
        }
        let (gr, hr) = (g_tot - gl, h_tot - hl);
        if hl < min_child_weight || hr < min_child_weight {
            continue;
        }
        let gain = 0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - parent);
        if best.is_none_or(|b| gain > b.gain) {
            *best = Some(Split {
                feature,
                threshold: v + (nv - v) / 2.0,
                gain,
            });
        }
    }
}

fn sort_by_feature(x: &FeatureMatrix, rows: &[usize], feature: usize) -> Vec<usize> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| {
        x.values[a * x.n_cols + feature]
            .total_cmp(&x.values[b * x.n_cols + feature])
            .then(a.cmp(&b))
    });
    sorted
}

fn finish(best: Option<Split>) -> Option<Split> {
    best.filter(|s| s.gain > 0.0)
}

/// Exact greedy search over every midpoint between adjacent distinct
/// values of each candidate feature. Returns `None` when no split has
/// positive gain with both children at or above `min_child_weight`.
pub fn find_best_split(
    x: &FeatureMatrix,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    lambda: f64,
    min_child_weight: f64,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let totals = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r], h + hess[r]));
    let mut feats = features.to_vec();
    feats.sort_unstable();
    let mut best = None;
    for f in feats {
        let sorted = sort_by_feature(x, rows, f);
        scan_feature(x, f, &sorted, grad, hess, totals, lambda, min_child_weight, &mut best);
    }
    finish(best)
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    /// `lists[k]` holds the node's rows sorted by feature `features[k]`.
    fn grow(&mut self, features: &[usize], lists: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &lists[0];
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            weight: -g / (h + self.cfg.lambda_l2),
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return id;
        }
        let mut best = None;
        for (k, &f) in features.iter().enumerate() {
            scan_feature(
                self.x,
                f,
                &lists[k],
                self.grad,
                self.hess,
                (g, h),
                self.cfg.lambda_l2,
                self.cfg.min_child_weight,
                &mut best,
            );
        }
        let Some(split) = finish(best) else {
            return id;
        };
        let goes_left =
            |r: usize| self.x.values[r * self.x.n_cols + split.feature] < split.threshold;
        let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = lists
            .into_iter()
            .map(|l| l.into_iter().partition(|&r| goes_left(r)))
            .unzip();
        let l = self.grow(features, left, depth + 1);
        let r = self.grow(features, right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

fn rmse_of(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64).sqrt()
}

fn take_fraction(n: usize, frac: f64) -> usize {
    ((frac * n as f64).round() as usize).clamp(1, n)
}

/// Boosts up to `n_estimators` trees, stopping once validation RMSE has not
/// improved for `early_stopping_patience` rounds.
pub fn fit_gbdt(
    train_f: &FeatureMatrix,
    train_y: &[f64],
    val_f: &FeatureMatrix,
    val_y: &[f64],
    cfg: &GbdtConfig,
) -> Result<GbdtModel> {
    cfg.validate()?;
    let n = train_f.n_rows;
    let d = train_f.n_cols;
    if n == 0 || d == 0 {
        return Err(RulError::value("boosting needs a nonempty training set"));
    }
    if val_f.n_rows == 0 {
        return Err(RulError::value("boosting needs a nonempty validation set"));
    }
    if train_y.len() != n || val_y.len() != val_f.n_rows || val_f.n_cols != d {
        return Err(RulError::structure("feature/target shapes disagree"));
    }
    if train_y.iter().chain(val_y).any(|v| !v.is_finite()) {
        return Err(RulError::value("non-finite target"));
    }

    let base_score = train_y.iter().sum::<f64>() / n as f64;
    let presorted: Vec<Vec<usize>> = (0..d)
        .map(|f| sort_by_feature(train_f, &(0..n).collect::<Vec<_>>(), f))
        .collect();
    let hess = vec![1.0; n];
    let mut train_pred = vec![base_score; n];
    let mut val_pred = vec![base_score; val_f.n_rows];
    let mut model = GbdtModel {
        base_score,
        learning_rate: cfg.learning_rate,
        n_features: d,
        trees: Vec::new(),
        best_round: 0,
        val_rmse: Vec::new(),
        train_rmse: Vec::new(),
    };
    let mut best = (f64::INFINITY, 0usize);
    let mut in_sample = vec![false; n];

    for round in 0..cfg.n_estimators {
        let grad: Vec<f64> = train_pred.iter().zip(train_y).map(|(p, y)| p - y).collect();
        let mut rng = StreamRng::indexed(cfg.seed, "gbdt.round", round as u64);
        let mut rows: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut rows);
        in_sample.fill(false);
        for &r in &rows[..take_fraction(n, cfg.subsample)] {
            in_sample[r] = true;
        }
        let mut cols: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut cols);
        cols.truncate(take_fraction(d, cfg.colsample_bytree));
        cols.sort_unstable();

        let lists: Vec<Vec<usize>> = cols
            .iter()
            .map(|&f| presorted[f].iter().copied().filter(|&r| in_sample[r]).collect())
            .collect();
        let mut builder = Builder {
            x: train_f,
            grad: &grad,
            hess: &hess,
            cfg,
            nodes: Vec::new(),
        };
        builder.grow(&cols, lists, 0);
        let tree = Tree { nodes: builder.nodes };

        for (i, p) in train_pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.eval(train_f.row(i));
        }
        for (i, p) in val_pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.eval(val_f.row(i));
        }
        model.trees.push(tree);
        let v = rmse_of(&val_pred, val_y);
        model.val_rmse.push(v);
        model.train_rmse.push(rmse_of(&train_pred, train_y));
        if !v.is_finite() {
            return Err(RulError::Numeric(format!("validation RMSE diverged at round {round}")));
        }
        if v < best.0 {
            best = (v, round);
        } else if round - best.1 >= cfg.early_stopping_patience {
            break;
        }
    }
    model.best_round = best.1 + 1;
    Ok(model)
}
