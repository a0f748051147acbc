//! Discrimination metrics and patient-level cross-validation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{self, CascadeSpec};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::features::FeatureCache;
use crate::seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One ROC vertex. `threshold` is `None` for the origin (nothing predicted
/// positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: Option<f64>,
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Misaligned(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            column: "score".into(),
            row: i,
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::single_class("evaluation labels"));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half (rank-sum form of the Mann-Whitney statistic).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += mid_rank * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC vertices from the strictest threshold to the most lenient; tied
/// scores produce a single (diagonal) step.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Sensitivity `TP / (TP + FN)` and specificity `TN / (FP + TN)`, where a
/// row is predicted positive when its score is at least `threshold`.
pub fn sensitivity_specificity(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<(f64, f64, ConfusionCounts)> {
    class_counts(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let sens = c.tp as f64 / (c.tp + c.fn_) as f64;
    let spec = c.tn as f64 / (c.fp + c.tn) as f64;
    Ok((sens, spec, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_patients: usize,
    pub n_rows: usize,
    pub n_positive: usize,
    pub auroc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: ConfusionCounts,
    pub roc_points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub threshold: f64,
    pub seed: u64,
    pub mean_auroc: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    pub per_fold: Vec<FoldReport>,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// `fold,fpr,tpr,threshold` rows; the origin's threshold is `inf`.
    pub fn write_roc_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fold", "fpr", "tpr", "threshold"])?;
        for f in &self.per_fold {
            for p in &f.roc_points {
                let thr = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
                w.write_record([f.fold.to_string(), p.fpr.to_string(), p.tpr.to_string(), thr])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Assigns `items` to `k` folds, dealing positives and negatives round-robin
/// after independent seeded shuffles. Returns the item lists per fold.
pub(crate) fn stratified_folds(items: &[usize], positive: &[bool], k: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut rng = seed::rng(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = items.iter().partition(|&&i| positive[i]);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        folds[slot % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// `k`-fold cross-validation with whole patients per fold, stratified by
/// whether the patient contributes a positive row at the target horizon.
/// Each fold trains a cascade (with resampling) on the other folds and is
/// scored on its own rows untouched.
pub fn cross_validate(cohort: &Cohort, spec: &CascadeSpec, k: usize, threshold: f64) -> Result<EvalReport> {
    spec.validate()?;
    if k < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let cache = FeatureCache::build(cohort, &spec.window)?;
    let h = spec.target_horizon;
    let positive: Vec<bool> = cache.blocks.iter().map(|b| b.has_positive_at(h)).collect();
    let positives = positive.iter().filter(|&&p| p).count();
    if positives < k {
        return Err(Error::Stratification { positives, folds: k });
    }
    let master = spec.sampler.seed;
    let folds = stratified_folds(
        &cache.all_patients(),
        &positive,
        k,
        seed::derive(master, &[seed::TAG_FOLD_ASSIGNMENT]),
    );

    let per_fold: Vec<FoldReport> = (0..k)
        .into_par_iter()
        .map(|j| -> Result<FoldReport> {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let mut fold_spec = spec.clone();
            fold_spec.sampler.seed = seed::derive(master, &[seed::TAG_OUTER_FOLD, j as u64]);
            let (model, _) = cascade::train_on(&cache, &train, &fold_spec)?;
            let test = cache.frame(&folds[j], h);
            let scores = model.predict_frame(&test)?;
            let auroc = auroc(&scores, &test.target)?;
            let (sensitivity, specificity, counts) = sensitivity_specificity(&scores, &test.target, threshold)?;
            Ok(FoldReport {
                fold: j,
                n_patients: folds[j].len(),
                n_rows: test.n_rows(),
                n_positive: test.positives(),
                auroc,
                sensitivity,
                specificity,
                counts,
                roc_points: roc_points(&scores, &test.target)?,
            })
        })
        .collect::<Result<_>>()?;

    let mean = |f: fn(&FoldReport) -> f64| per_fold.iter().map(f).sum::<f64>() / k as f64;
    Ok(EvalReport {
        folds: k,
        threshold,
        seed: master,
        mean_auroc: mean(|f| f.auroc),
        mean_sensitivity: mean(|f| f.sensitivity),
        mean_specificity: mean(|f| f.specificity),
        per_fold,
        config: serde_json::to_value(spec)?,
        config_hash: String::new(),
        notes: vec![
            "folds are patient-level, stratified by presence of a positive target row".into(),
        ],
    })
}
