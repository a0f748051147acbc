//! Cascaded horizon models.
//!
//! Intermediate models predict onset `h` hours ahead (h < target) from the
//! base features only. Their probabilities are appended to the base features
//! as `subset_prob_<h>hr` columns and the target-horizon model is trained on
//! the result. When training the target, intermediate probabilities are
//! out-of-fold by default: each row is scored by a model that never saw its
//! patient. At inference time the intermediates refit on all training
//! patients are used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::eval::stratified_folds;
use crate::features::{subset_prob_name, FeatureCache, FeatureFrame, KeyedColumns, RowKey, WindowSpec};
use crate::gbdt::{GbdtModel, TrainParams};
use crate::sampling::{rebalance_weights, SamplerConfig};
use crate::seed;

pub const CASCADE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    OneSubset,
    TwoSubsets,
    SixSubsets,
}

impl SubsetMode {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Self::OneSubset),
            2 => Ok(Self::TwoSubsets),
            6 => Ok(Self::SixSubsets),
            other => Err(Error::Config(format!("subsets must be 1, 2 or 6 (got {other})"))),
        }
    }

    pub fn count(&self) -> u32 {
        match self {
            Self::OneSubset => 1,
            Self::TwoSubsets => 2,
            Self::SixSubsets => 6,
        }
    }

    /// Intermediate horizons for a given target: none, the midpoint, or every
    /// hour in between.
    pub fn intermediate_horizons(&self, target: usize) -> Vec<usize> {
        match self {
            Self::OneSubset => vec![],
            Self::TwoSubsets => vec![target / 2],
            Self::SixSubsets => (1..target).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageControl {
    /// Intermediate probabilities for target training come from models that
    /// excluded the row's patient.
    Oof,
    /// Intermediate probabilities come from the intermediates fit on all
    /// training patients.
    Insample,
}

impl FromStr for LeakageControl {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oof" => Ok(Self::Oof),
            "insample" => Ok(Self::Insample),
            other => Err(Error::Config(format!("unknown leakage control `{other}`"))),
        }
    }
}

impl fmt::Display for LeakageControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Oof => "oof",
            Self::Insample => "insample",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    pub target_horizon: usize,
    pub mode: SubsetMode,
    pub window: WindowSpec,
    pub params: TrainParams,
    pub sampler: SamplerConfig,
    pub leakage_control: LeakageControl,
    /// Patient-level folds used for out-of-fold intermediate probabilities.
    pub inner_folds: usize,
}

impl Default for CascadeSpec {
    fn default() -> Self {
        Self {
            target_horizon: 6,
            mode: SubsetMode::SixSubsets,
            window: WindowSpec::default(),
            params: TrainParams::default(),
            sampler: SamplerConfig::default(),
            leakage_control: LeakageControl::Oof,
            inner_folds: 5,
        }
    }
}

impl CascadeSpec {
    pub fn intermediate_horizons(&self) -> Vec<usize> {
        self.mode.intermediate_horizons(self.target_horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.sampler.validate()?;
        if self.window.w < 1 {
            return Err(Error::Config("observation window must be at least 1 hour".into()));
        }
        if self.mode != SubsetMode::OneSubset && self.target_horizon < 2 {
            return Err(Error::Config(
                "a cascade needs a target horizon of at least 2 hours".into(),
            ));
        }
        if self.leakage_control == LeakageControl::Oof && self.inner_folds < 2 {
            return Err(Error::Config("inner_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Summary of one target-model input column over the training rows, used to
/// scale perturbations when explaining predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// Empirical quantiles (101 points) for static columns, which are
    /// perturbed by resampling instead of Gaussian noise.
    pub marginal: Option<Vec<f64>>,
}

impl FeatureStat {
    fn from_column(name: &str, values: &[f64], is_static: bool) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let marginal = is_static.then(|| {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            (0..=100)
                .map(|q| sorted[(q * (sorted.len() - 1) + 50) / 100])
                .collect()
        });
        Self {
            name: name.to_string(),
            mean,
            std,
            marginal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub spec: CascadeSpec,
    pub base_feature_names: Vec<String>,
    pub intermediates: BTreeMap<usize, GbdtModel>,
    pub target: GbdtModel,
    /// One entry per target-model input column, in order.
    pub feature_stats: Vec<FeatureStat>,
}

/// Intermediate probabilities for target-horizon rows, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct OofProbs {
    pub horizon: usize,
    pub rows: Vec<RowKey>,
    pub probs: Vec<f64>,
    /// Index of the fold model that scored each row.
    pub source_fold: Vec<usize>,
    /// Patients each fold model was trained on.
    pub fold_training_patients: Vec<BTreeSet<Arc<str>>>,
}

impl OofProbs {
    /// Rows scored by a model whose training set contained the row's patient.
    pub fn leakage_violations(&self) -> usize {
        self.rows
            .iter()
            .zip(&self.source_fold)
            .filter(|(r, &f)| self.fold_training_patients[f].contains(&r.patient_id))
            .count()
    }
}

/// Provenance gathered while training a cascade.
#[derive(Debug, Clone, Default)]
pub struct CascadeAudit {
    pub oof: BTreeMap<usize, OofProbs>,
}

fn require_both_classes(frame: &FeatureFrame, what: impl FnOnce() -> String) -> Result<()> {
    let pos = frame.positives();
    if pos == 0 || pos == frame.n_rows() {
        return Err(Error::single_class(what()));
    }
    Ok(())
}

fn fit_rebalanced(frame: &FeatureFrame, params: &TrainParams, sampler: &SamplerConfig) -> Result<GbdtModel> {
    let weights = rebalance_weights(&frame.target, sampler)?;
    GbdtModel::fit_weighted(frame, &weights, params)
}

fn patient_ids(cache: &FeatureCache, patients: &[usize]) -> BTreeSet<Arc<str>> {
    patients.iter().map(|&p| cache.blocks[p].patient_id.clone()).collect()
}

pub(crate) fn oof_on(cache: &FeatureCache, patients: &[usize], horizon: usize, spec: &CascadeSpec, k: usize) -> Result<OofProbs> {
    if k < 2 {
        return Err(Error::Config("out-of-fold scoring needs k >= 2".into()));
    }
    let target_h = spec.target_horizon;
    let positive: Vec<bool> = cache.blocks.iter().map(|b| b.has_positive_at(horizon)).collect();
    let master = spec.sampler.seed;
    // fold assignment must not depend on the order the caller lists patients in
    let mut canonical = patients.to_vec();
    canonical.sort_unstable();
    let folds = stratified_folds(
        &canonical,
        &positive,
        k,
        seed::derive(master, &[seed::TAG_INTERMEDIATE_OOF, horizon as u64]),
    );

    let scored: Vec<(Vec<f64>, BTreeSet<Arc<str>>)> = (0..k)
        .into_par_iter()
        .map(|j| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let frame = cache.frame(&train, horizon);
            require_both_classes(&frame, || {
                format!("out-of-fold split {j} at horizon {horizon}")
            })?;
            let sampler = spec.sampler.with_seed(seed::derive(
                master,
                &[seed::TAG_INTERMEDIATE_OOF, horizon as u64, j as u64],
            ));
            let model = fit_rebalanced(&frame, &spec.params, &sampler)?;
            let probs = model.predict_proba(&cache.frame(&folds[j], target_h))?;
            Ok((probs, patient_ids(cache, &train)))
        })
        .collect::<Result<_>>()?;

    // (fold, offset of the patient's first row in that fold's scores)
    let mut located = vec![(usize::MAX, 0usize); cache.blocks.len()];
    for (j, f) in folds.iter().enumerate() {
        let mut offset = 0;
        for &p in f {
            located[p] = (j, offset);
            offset += cache.blocks[p].rows_at(target_h);
        }
    }
    let mut probs = Vec::new();
    let mut source_fold = Vec::new();
    for &p in patients {
        let (j, offset) = located[p];
        let n = cache.blocks[p].rows_at(target_h);
        probs.extend_from_slice(&scored[j].0[offset..offset + n]);
        source_fold.extend(std::iter::repeat_n(j, n));
    }
    Ok(OofProbs {
        horizon,
        rows: cache.keys(patients, target_h),
        probs,
        source_fold,
        fold_training_patients: scored.into_iter().map(|(_, ids)| ids).collect(),
    })
}

/// Probabilities of onset in `horizon` hours for every target-horizon row of
/// the cohort, each produced by a model trained on the other `k - 1`
/// patient folds.
pub fn out_of_fold_probs(cohort: &Cohort, horizon: usize, spec: &CascadeSpec, k: usize) -> Result<OofProbs> {
    spec.validate()?;
    let cache = FeatureCache::build(cohort, &spec.window)?;
    oof_on(&cache, &cache.all_patients(), horizon, spec, k)
}

pub(crate) fn train_on(cache: &FeatureCache, patients: &[usize], spec: &CascadeSpec) -> Result<(CascadeModel, CascadeAudit)> {
    spec.validate()?;
    let target_h = spec.target_horizon;
    let master = spec.sampler.seed;
    let mut target_frame = cache.frame(patients, target_h);
    require_both_classes(&target_frame, || format!("target horizon {target_h}"))?;

    let trained: Vec<(usize, GbdtModel, Vec<f64>, Option<OofProbs>)> = spec
        .intermediate_horizons()
        .into_par_iter()
        .map(|h| {
            let frame = cache.frame(patients, h);
            require_both_classes(&frame, || format!("intermediate horizon {h}"))?;
            let sampler = spec.sampler.with_seed(seed::derive(
                master,
                &[seed::TAG_INTERMEDIATE_FULL, h as u64],
            ));
            let full = fit_rebalanced(&frame, &spec.params, &sampler)?;
            match spec.leakage_control {
                LeakageControl::Oof => {
                    let oof = oof_on(cache, patients, h, spec, spec.inner_folds)?;
                    Ok((h, full, oof.probs.clone(), Some(oof)))
                }
                LeakageControl::Insample => {
                    let probs = full.predict_proba(&target_frame)?;
                    Ok((h, full, probs, None))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut audit = CascadeAudit::default();
    let mut intermediates = BTreeMap::new();
    let mut extra = KeyedColumns {
        rows: target_frame.rows.clone(),
        columns: Vec::new(),
    };
    for (h, model, probs, oof) in trained {
        extra.columns.push((subset_prob_name(h), probs));
        intermediates.insert(h, model);
        if let Some(o) = oof {
            audit.oof.insert(h, o);
        }
    }
    target_frame.append(&extra)?;

    let sampler = spec.sampler.with_seed(seed::derive(master, &[seed::TAG_TARGET]));
    let target = fit_rebalanced(&target_frame, &spec.params, &sampler)?;

    let feature_stats = target_frame
        .names
        .iter()
        .zip(&target_frame.columns)
        .enumerate()
        .map(|(j, (name, col))| {
            FeatureStat::from_column(name, col, cache.static_mask.get(j).copied().unwrap_or(false))
        })
        .collect();

    Ok((
        CascadeModel {
            spec: spec.clone(),
            base_feature_names: cache.names.clone(),
            intermediates,
            target,
            feature_stats,
        },
        audit,
    ))
}

/// Trains intermediates and the target model on a filtered, imputed cohort.
pub fn train_cascade(cohort: &Cohort, spec: &CascadeSpec) -> Result<CascadeModel> {
    train_cascade_audited(cohort, spec).map(|(m, _)| m)
}

/// [`train_cascade`] plus the provenance of every out-of-fold probability.
pub fn train_cascade_audited(cohort: &Cohort, spec: &CascadeSpec) -> Result<(CascadeModel, CascadeAudit)> {
    let cache = FeatureCache::build(cohort, &spec.window)?;
    train_on(&cache, &cache.all_patients(), spec)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: CascadeSpec,
    base_feature_names: Vec<String>,
    intermediates: BTreeMap<usize, String>,
    target: String,
    feature_stats: Vec<FeatureStat>,
}

impl CascadeModel {
    pub fn target_feature_names(&self) -> &[String] {
        &self.target.feature_names
    }

    /// Base features plus one probability column per intermediate horizon.
    pub fn augment(&self, base: &FeatureFrame) -> Result<FeatureFrame> {
        if base.names != self.base_feature_names {
            return Err(Error::ColumnMismatch(format!(
                "cascade expects {} base columns, frame has {}",
                self.base_feature_names.len(),
                base.names.len()
            )));
        }
        let mut frame = base.clone();
        let columns = self
            .intermediates
            .iter()
            .map(|(&h, m)| Ok((subset_prob_name(h), m.predict_proba(base)?)))
            .collect::<Result<_>>()?;
        frame.append(&KeyedColumns {
            rows: base.rows.clone(),
            columns,
        })?;
        Ok(frame)
    }

    /// Target-horizon probabilities for a frame of base features.
    pub fn predict_frame(&self, base: &FeatureFrame) -> Result<Vec<f64>> {
        self.target.predict_proba(&self.augment(base)?)
    }

    pub fn predict_target_row(&self, augmented_row: &[f64]) -> f64 {
        self.target.predict_row(augmented_row)
    }

    /// Writes `manifest.json` plus one model file per horizon into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = BTreeMap::new();
        for (&h, m) in &self.intermediates {
            let name = format!("model_h{h}.json");
            m.save_json(dir.join(&name))?;
            files.insert(h, name);
        }
        let target_name = format!("model_h{}.json", self.spec.target_horizon);
        self.target.save_json(dir.join(&target_name))?;
        let manifest = Manifest {
            format_version: CASCADE_FORMAT_VERSION,
            spec: self.spec.clone(),
            base_feature_names: self.base_feature_names.clone(),
            intermediates: files,
            target: target_name,
            feature_stats: self.feature_stats.clone(),
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != CASCADE_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported cascade format version {}",
                manifest.format_version
            )));
        }
        let intermediates = manifest
            .intermediates
            .iter()
            .map(|(&h, f)| Ok((h, GbdtModel::load_json(dir.join(f))?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: manifest.spec,
            base_feature_names: manifest.base_feature_names,
            intermediates,
            target: GbdtModel::load_json(dir.join(&manifest.target))?,
            feature_stats: manifest.feature_stats,
        })
    }
}

/// Target-horizon probability for every hour of every patient in `cohort`.
pub fn predict_cascade(model: &CascadeModel, cohort: &Cohort) -> Result<Vec<(RowKey, f64)>> {
    let cache = FeatureCache::build(cohort, &model.spec.window)?;
    let frame = cache.frame(&cache.all_patients(), 0);
    let probs = model.predict_frame(&frame)?;
    Ok(frame.rows.into_iter().zip(probs).collect())
}
