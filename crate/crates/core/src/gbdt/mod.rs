//! Second-order gradient-boosted decision trees with logistic loss.
//!
//! Each round computes per-row gradients `g = w (p - y)` and hessians
//! `h = w p (1 - p)`, grows one tree by exact greedy search over sorted
//! feature values, and adds `learning_rate * leaf_weight` to every row's
//! margin. Split gain is
//! `0.5 * [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)] - gamma` and leaf
//! weights are `-G / (H + l)`.

mod tree;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::TreeNode;
use tree::TreeBuilder;

use crate::error::{Error, Result};
use crate::features::FeatureFrame;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    /// Minimum net gain for a split.
    pub gamma: f64,
    pub min_child_weight: f64,
    pub base_score: f64,
    /// Exact greedy growth without row or column subsampling consumes no
    /// randomness; the seed is kept so the parameter set is self-describing.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            base_score: 0.5,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(1..=32).contains(&self.max_depth) {
            return bad("max_depth must be in 1..=32");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be finite and >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be finite and >= 0");
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub params: TrainParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
    /// Weighted mean training log-loss before the first tree and after each
    /// round (`n_rounds + 1` entries).
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn mean_log_loss(margin: &[f64], y: &[u8], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&f, &t), &wi) in margin.iter().zip(y).zip(w) {
        num += wi * (softplus(f) - f64::from(t) * f);
        den += wi;
    }
    num / den
}

impl GbdtModel {
    /// Fits on every row with unit weight.
    pub fn fit(frame: &FeatureFrame, params: &TrainParams) -> Result<Self> {
        Self::fit_weighted(frame, &vec![1.0; frame.n_rows()], params)
    }

    /// Fits with per-row sample weights. A row of weight `k` is equivalent to
    /// `k` copies of it; rows of weight 0 are ignored.
    pub fn fit_weighted(frame: &FeatureFrame, weights: &[f64], params: &TrainParams) -> Result<Self> {
        params.validate()?;
        if weights.len() != frame.n_rows() {
            return Err(Error::Misaligned("one weight per row required".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("sample weights must be finite and >= 0".into()));
        }
        for (name, col) in frame.names.iter().zip(&frame.columns) {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    column: name.clone(),
                    row,
                });
            }
        }

        // Zero-weight rows contribute nothing; drop them up front.
        let active: Vec<usize> = (0..frame.n_rows()).filter(|&i| weights[i] > 0.0).collect();
        let y: Vec<u8> = active.iter().map(|&i| frame.target[i]).collect();
        let w: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
        if y.is_empty() || y.iter().all(|&t| t == y[0]) {
            return Err(Error::single_class("training frame"));
        }
        let columns: Vec<Vec<f64>> = frame
            .columns
            .iter()
            .map(|c| active.iter().map(|&i| c[i]).collect())
            .collect();

        let n = y.len();
        let (sorted, sorted_values): (Vec<Vec<u32>>, Vec<Vec<f64>>) = columns
            .par_iter()
            .map(|c| {
                let mut pairs: Vec<(f64, u32)> = c.iter().copied().zip(0..n as u32).collect();
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                pairs.into_iter().map(|(v, i)| (i, v)).unzip()
            })
            .unzip();

        let base = logit(params.base_score);
        let mut margin = vec![base; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut train_loss = Vec::with_capacity(params.n_rounds + 1);
        train_loss.push(mean_log_loss(&margin, &y, &w));

        for _ in 0..params.n_rounds {
            for i in 0..n {
                let p = sigmoid(margin[i]);
                grad[i] = w[i] * (p - f64::from(y[i]));
                hess[i] = w[i] * p * (1.0 - p);
            }
            let builder = TreeBuilder {
                columns: &columns,
                sorted: &sorted,
                sorted_values: &sorted_values,
                grad: &grad,
                hess: &hess,
                params,
            };
            let (tree, leaf_values) = builder.build();
            for (m, v) in margin.iter_mut().zip(leaf_values) {
                *m += params.learning_rate * v;
            }
            train_loss.push(mean_log_loss(&margin, &y, &w));
            trees.push(tree);
        }

        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            params: *params,
            feature_names: frame.names.clone(),
            trees,
            train_loss,
        })
    }

    pub fn margin_row(&self, row: &[f64]) -> f64 {
        let eta = self.params.learning_rate;
        self.trees
            .iter()
            .fold(logit(self.params.base_score), |m, t| m + eta * t.leaf_value(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin_row(row))
    }

    fn check_columns(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            let missing: Vec<&str> = self
                .feature_names
                .iter()
                .filter(|n| !names.contains(n))
                .map(String::as_str)
                .take(5)
                .collect();
            return Err(Error::ColumnMismatch(format!(
                "model expects {} columns, frame has {}; first missing: {:?}",
                self.feature_names.len(),
                names.len(),
                missing
            )));
        }
        Ok(())
    }

    /// Probability per row. The frame's columns must equal the model's
    /// feature list, in order.
    pub fn predict_proba(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        self.check_columns(&frame.names)?;
        let eta = self.params.learning_rate;
        let base = logit(self.params.base_score);
        Ok((0..frame.n_rows())
            .map(|i| {
                let m = self
                    .trees
                    .iter()
                    .fold(base, |m, t| m + eta * t.leaf_value_col(&frame.columns, i));
                sigmoid(m)
            })
            .collect())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// Total split gain per feature, in the model's feature order. Features
/// never used in a split get 0.
pub fn gain_importance(model: &GbdtModel) -> Vec<(String, f64)> {
    let mut totals = vec![0.0; model.feature_names.len()];
    for t in &model.trees {
        t.for_each_split(&mut |f, g| totals[f] += g);
    }
    model.feature_names.iter().cloned().zip(totals).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RowKey;
    use std::sync::Arc;

    pub(crate) fn frame(columns: Vec<Vec<f64>>, target: Vec<u8>) -> FeatureFrame {
        let rows = (0..target.len())
            .map(|i| RowKey {
                patient_id: Arc::from("p"),
                hour: i as i64,
            })
            .collect();
        let names = (0..columns.len()).map(|j| format!("f{j}")).collect();
        FeatureFrame::new(rows, names, columns, target).unwrap()
    }

    #[test]
    fn empty_ensemble_predicts_base_score() {
        let f = frame(vec![vec![0.0, 1.0, 2.0]], vec![0, 1, 1]);
        let params = TrainParams { n_rounds: 0, ..Default::default() };
        let m = GbdtModel::fit(&f, &params).unwrap();
        assert!(m.trees.is_empty());
        assert!(m.predict_proba(&f).unwrap().iter().all(|&p| p == 0.5));
        assert!(gain_importance(&m).iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn four_row_stump_leaf_weights() {
        // x: 1 2 3 4, y: 0 0 1 1, p0 = 0.5 => g = p - y, h = 0.25
        let f = frame(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 0, 1, 1]);
        let params = TrainParams {
            n_rounds: 1,
            max_depth: 1,
            reg_lambda: 1.0,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let m = GbdtModel::fit(&f, &params).unwrap();
        // left {1,2}: G = 1.0, H = 0.5 ; right {3,4}: G = -1.0, H = 0.5
        let left = -1.0 / (0.5 + 1.0);
        let right = 1.0 / (0.5 + 1.0);
        match &m.trees[0] {
            TreeNode::Split { threshold, left: l, right: r, .. } => {
                assert_eq!(*threshold, 2.5);
                assert_eq!(**l, TreeNode::Leaf { weight: left });
                assert_eq!(**r, TreeNode::Leaf { weight: right });
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let f = frame(vec![x.clone(), x], vec![0, 0, 1, 1]);
        let params = TrainParams { n_rounds: 1, max_depth: 1, min_child_weight: 0.0, ..Default::default() };
        let m = GbdtModel::fit(&f, &params).unwrap();
        assert!(matches!(m.trees[0], TreeNode::Split { feature: 0, .. }));
        let imp = gain_importance(&m);
        assert!(imp[0].1 > 0.0 && imp[1].1 == 0.0);
    }

    #[test]
    fn single_class_and_non_finite_rejected() {
        let f = frame(vec![vec![0.0, 1.0]], vec![1, 1]);
        assert!(matches!(GbdtModel::fit(&f, &TrainParams::default()), Err(Error::SingleClass { .. })));
        let f = frame(vec![vec![0.0, f64::NAN]], vec![0, 1]);
        assert!(matches!(GbdtModel::fit(&f, &TrainParams::default()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn column_mismatch_rejected() {
        let f = frame(vec![vec![0.0, 1.0, 2.0, 3.0]], vec![0, 0, 1, 1]);
        let m = GbdtModel::fit(&f, &TrainParams { n_rounds: 3, ..Default::default() }).unwrap();
        let mut g = f.clone();
        g.names[0] = "other".into();
        assert!(matches!(m.predict_proba(&g), Err(Error::ColumnMismatch(_))));
    }

    #[test]
    fn huge_lambda_keeps_base_score() {
        let f = frame(vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]], vec![0, 0, 0, 1, 1, 1]);
        let params = TrainParams { n_rounds: 20, reg_lambda: 1e15, min_child_weight: 0.0, ..Default::default() };
        let m = GbdtModel::fit(&f, &params).unwrap();
        for p in m.predict_proba(&f).unwrap() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_equal_duplicated_rows() {
        let x = vec![0.3, 1.2, 2.5, 0.7, 3.1, 2.2];
        let y = vec![0, 0, 1, 0, 1, 1];
        let params = TrainParams { n_rounds: 5, max_depth: 2, min_child_weight: 0.0, ..Default::default() };
        let weighted = GbdtModel::fit_weighted(&frame(vec![x.clone()], y.clone()), &[1.0, 3.0, 1.0, 0.0, 2.0, 1.0], &params).unwrap();
        let dup_idx = [0, 1, 1, 1, 2, 4, 4, 5];
        let xd: Vec<f64> = dup_idx.iter().map(|&i| x[i]).collect();
        let yd: Vec<u8> = dup_idx.iter().map(|&i| y[i]).collect();
        let dup = GbdtModel::fit(&frame(vec![xd], yd), &params).unwrap();
        for (a, b) in weighted.trees.iter().zip(&dup.trees) {
            for (la, lb) in a.leaves().iter().zip(b.leaves()) {
                assert!((la - lb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64 / 7.0).collect();
        let ys: Vec<f64> = (0..40).map(|i| ((i * 11) % 13) as f64 * 0.1).collect();
        let t: Vec<u8> = (0..40).map(|i| u8::from((i * 37) % 17 > 8)).collect();
        let f = frame(vec![xs, ys], t);
        let m = GbdtModel::fit(&f, &TrainParams { n_rounds: 15, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save_json(&path).unwrap();
        let back = GbdtModel::load_json(&path).unwrap();
        assert_eq!(back, m);
        let (a, b) = (m.predict_proba(&f).unwrap(), back.predict_proba(&f).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300 || softplus(-800.0) == 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
