//! Local linear surrogates and global gain ranking for cascade models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeModel, FeatureStat};
use crate::error::{Error, Result};
use crate::gbdt::gain_importance;
use crate::seed;

pub const MIN_PERTURBATIONS: usize = 50;

/// Added to the diagonal when the weighted normal equations are singular.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    /// Sorted by absolute weight, largest first.
    pub weights: Vec<(String, f64)>,
    pub intercept: f64,
    /// Model output for the unperturbed instance.
    pub prediction: f64,
    pub kernel_width: f64,
    pub n_perturbations: usize,
    pub seed: u64,
    pub ridge_fallback: bool,
}

impl Explanation {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two-column text table, one feature per line.
    pub fn to_table(&self) -> String {
        format_table(("feature", "weight"), &self.weights)
    }
}

pub fn format_table(header: (&str, &str), rows: &[(String, f64)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain([header.0.len()])
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<width$}  {}\n", header.0, header.1);
    for (name, w) in rows {
        out += &format!("{name:<width$}  {w:.6}\n");
    }
    out
}

/// Kernel width for `p` features.
pub fn kernel_width(p: usize) -> f64 {
    0.75 * (p as f64).sqrt()
}

/// Explains the target model's probability around one augmented feature row
/// (base features followed by the subset probabilities).
pub fn local_surrogate(
    model: &CascadeModel,
    instance_id: &str,
    instance: &[f64],
    n: usize,
    top_k: usize,
    seed: u64,
) -> Result<Explanation> {
    let names = model.target_feature_names();
    if instance.len() != names.len() {
        return Err(Error::ColumnMismatch(format!(
            "instance has {} values, target model expects {}",
            instance.len(),
            names.len()
        )));
    }
    if model.feature_stats.len() != names.len() {
        return Err(Error::ColumnMismatch("feature statistics do not cover the target features".into()));
    }
    fit_surrogate(
        |row| model.predict_target_row(row),
        names,
        &model.feature_stats,
        instance_id,
        instance,
        n,
        top_k,
        seed,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_surrogate(
    score: impl Fn(&[f64]) -> f64 + Sync,
    names: &[String],
    stats: &[FeatureStat],
    instance_id: &str,
    instance: &[f64],
    n: usize,
    top_k: usize,
    seed: u64,
) -> Result<Explanation> {
    if n < MIN_PERTURBATIONS {
        return Err(Error::Config(format!("need at least {MIN_PERTURBATIONS} perturbations, got {n}")));
    }
    if let Some(j) = instance.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            column: names[j].clone(),
            row: 0,
        });
    }
    let p = names.len();
    let active: Vec<usize> = (0..p).filter(|&j| stats[j].std > 0.0).collect();
    let kernel = kernel_width(p);

    // Rows are drawn one after another from a single stream, so a larger `n`
    // extends a smaller run rather than replacing it.
    let mut rng = seed::rng(seed::derive(seed, &[seed::TAG_EXPLAIN]));
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row = instance.to_vec();
            for &j in &active {
                let s = &stats[j];
                row[j] = match &s.marginal {
                    Some(q) if !q.is_empty() => q[rng.random_range(0..q.len())],
                    _ => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        instance[j] + s.std * z
                    }
                };
            }
            row
        })
        .collect();
    let y: Vec<f64> = samples.par_iter().map(|r| score(r)).collect();
    let prediction = score(instance);

    let m = active.len() + 1;
    let mut x = DMatrix::<f64>::zeros(n, m);
    let mut w = DVector::<f64>::zeros(n);
    for (i, row) in samples.iter().enumerate() {
        x[(i, 0)] = 1.0;
        let mut d2 = 0.0;
        for (c, &j) in active.iter().enumerate() {
            let z = (row[j] - instance[j]) / stats[j].std;
            x[(i, c + 1)] = z;
            d2 += z * z;
        }
        w[i] = (-d2 / (kernel * kernel)).exp();
    }
    let xtw = {
        let mut t = x.transpose();
        for (i, wi) in w.iter().enumerate() {
            t.column_mut(i).scale_mut(*wi);
        }
        t
    };
    let gram = &xtw * &x;
    let rhs = &xtw * DVector::from_vec(y);

    let solve = |g: DMatrix<f64>| {
        g.cholesky()
            .map(|c| c.solve(&rhs))
            .filter(|b| b.iter().all(|v| v.is_finite()))
    };
    let (beta, ridge_fallback) = match solve(gram.clone()) {
        Some(b) if well_conditioned(&gram) => (b, false),
        _ => {
            let mut g = gram;
            for c in 1..m {
                g[(c, c)] += RIDGE;
            }
            let b = solve(g).ok_or_else(|| Error::Config("surrogate design is singular even with ridge".into()))?;
            (b, true)
        }
    };

    let mut coef = vec![0.0; p];
    for (c, &j) in active.iter().enumerate() {
        coef[j] = beta[c + 1];
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()));
    let weights = order
        .into_iter()
        .take(top_k)
        .map(|j| (names[j].clone(), coef[j]))
        .collect();

    Ok(Explanation {
        instance_id: instance_id.to_string(),
        weights,
        intercept: beta[0],
        prediction,
        kernel_width: kernel,
        n_perturbations: n,
        seed,
        ridge_fallback,
    })
}

/// Cholesky succeeds on some numerically rank-deficient matrices; reject
/// those whose diagonal pivots collapse relative to the largest entry.
fn well_conditioned(g: &DMatrix<f64>) -> bool {
    let Some(c) = g.clone().cholesky() else {
        return false;
    };
    let l = c.l();
    let max = g.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    min_pivot > max * 1e-12
}

/// Target-model gain per feature (subset probabilities included), largest
/// first. `top_k` beyond the feature count returns every feature.
pub fn rank_features(model: &CascadeModel, top_k: usize) -> Vec<(String, f64)> {
    let mut gains = gain_importance(&model.target);
    gains.sort_by(|a, b| b.1.total_cmp(&a.1));
    gains.truncate(top_k);
    gains
}
