//! End-to-end experiment: filter, impute, select groups, cross-validate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{train_cascade, CascadeModel, CascadeSpec, LeakageControl, SubsetMode};
use crate::cohort::{carry_forward_impute, select_groups, Cohort, FeatureGroup};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, EvalReport};
use crate::features::{FeatureCache, FeatureFrame, WindowSpec};
use crate::gbdt::TrainParams;
use crate::labeling::{clip_to_day_range, truncate_after_onset};
use crate::sampling::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "delta")]
    Delta,
    #[serde(rename = "stats")]
    Stats,
    #[serde(rename = "delta+stats")]
    DeltaStats,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [Self::Baseline, Self::Delta, Self::Stats, Self::DeltaStats];

    pub fn window(&self, w: usize) -> WindowSpec {
        WindowSpec {
            w,
            enable_delta: matches!(self, Self::Delta | Self::DeltaStats),
            enable_stats: matches!(self, Self::Stats | Self::DeltaStats),
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "delta" => Ok(Self::Delta),
            "stats" => Ok(Self::Stats),
            "delta+stats" => Ok(Self::DeltaStats),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Delta => "delta",
            Self::Stats => "stats",
            Self::DeltaStats => "delta+stats",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subsets: SubsetMode,
    pub features: FeatureSet,
    pub groups: BTreeSet<FeatureGroup>,
    pub window: usize,
    pub target_horizon: usize,
    pub start_day: u32,
    pub end_day: u32,
    pub folds: usize,
    pub inner_folds: usize,
    pub threshold: f64,
    pub params: TrainParams,
    pub oversample_ratio: f64,
    pub undersample_to_parity: bool,
    pub leakage_control: LeakageControl,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            subsets: SubsetMode::SixSubsets,
            features: FeatureSet::DeltaStats,
            groups: FeatureGroup::ALL.into(),
            window: 6,
            target_horizon: 6,
            start_day: 2,
            end_day: 14,
            folds: 5,
            inner_folds: 5,
            threshold: 0.5,
            params: TrainParams::default(),
            oversample_ratio: 0.8,
            undersample_to_parity: true,
            leakage_control: LeakageControl::Oof,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn cascade_spec(&self) -> CascadeSpec {
        CascadeSpec {
            target_horizon: self.target_horizon,
            mode: self.subsets,
            window: self.features.window(self.window),
            params: self.params,
            sampler: SamplerConfig {
                oversample_ratio: self.oversample_ratio,
                undersample_to_parity: self.undersample_to_parity,
                seed: self.seed,
            },
            leakage_control: self.leakage_control,
            inner_folds: self.inner_folds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::EmptySelection);
        }
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.start_day < 1 || self.end_day < self.start_day {
            return Err(Error::Config("invalid day range".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        self.cascade_spec().validate()
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> Result<String> {
        json_digest(&serde_json::to_value(self)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a JSON value with object keys in sorted order.
pub fn json_digest(value: &serde_json::Value) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(value)?.as_bytes()))
}

/// Counts gathered while filtering a raw cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub patients_in: usize,
    pub patients_out: usize,
    pub excluded_empty: usize,
    pub rows_out: usize,
    pub event_patients: usize,
}

/// Truncates after first onset, clips to the day range, imputes and keeps
/// the selected groups. Patients with no rows left are dropped.
pub fn prepare_cohort(raw: &Cohort, cfg: &RunConfig) -> Result<(Cohort, PrepSummary)> {
    let mut kept = Vec::with_capacity(raw.patients.len());
    for p in &raw.patients {
        if let Some(s) = clip_to_day_range(&truncate_after_onset(p), cfg.start_day, cfg.end_day)? {
            kept.push(s);
        }
    }
    let filtered = Cohort::new(raw.schema.clone(), kept)?;
    let imputed = carry_forward_impute(&filtered)?;
    let selected = select_groups(&imputed, &cfg.groups)?;
    if cfg.features != FeatureSet::Baseline && selected.schema.trendable_indices().is_empty() {
        return Err(Error::Config(format!(
            "feature set `{}` needs trendable columns, none in the selected groups",
            cfg.features
        )));
    }
    let summary = PrepSummary {
        patients_in: raw.patients.len(),
        patients_out: selected.patients.len(),
        excluded_empty: raw.patients.len() - selected.patients.len(),
        rows_out: selected.total_rows(),
        event_patients: selected
            .patients
            .iter()
            .filter(|p| p.labels.first_onset().is_some())
            .count(),
    };
    Ok((selected, summary))
}

/// Runs the full pipeline on a raw cohort and returns the cross-validation
/// report with the configuration echoed and hashed.
pub fn run_experiment(raw: &Cohort, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let (cohort, summary) = prepare_cohort(raw, cfg)?;
    let mut report = cross_validate(&cohort, &cfg.cascade_spec(), cfg.folds, cfg.threshold)?;
    report.config = serde_json::to_value(cfg)?;
    report.config_hash = cfg.hash()?;
    report.notes.extend([
        format!(
            "cohort: {} patients in, {} kept ({} with no rows in days {}-{}), {} rows, {} with onset",
            summary.patients_in,
            summary.patients_out,
            summary.excluded_empty,
            cfg.start_day,
            cfg.end_day,
            summary.rows_out,
            summary.event_patients
        ),
        "values missing before a patient's first observation are filled with the cohort column median".into(),
        "undersampling reduces the majority class to the (oversampled) minority count".into(),
        format!("intermediate probabilities for target training: {}", cfg.leakage_control),
    ]);
    Ok(report)
}

/// Fits a cascade on every patient of a raw cohort.
pub fn train_model(raw: &Cohort, cfg: &RunConfig) -> Result<(CascadeModel, PrepSummary)> {
    cfg.validate()?;
    let (cohort, summary) = prepare_cohort(raw, cfg)?;
    Ok((train_cascade(&cohort, &cfg.cascade_spec())?, summary))
}

/// Base features of a prepared cohort with targets `h` hours ahead. Each
/// patient contributes the hours for which that target is defined; `h = 0`
/// keeps every hour with the onset label as target.
pub fn design_matrix(cohort: &Cohort, window: &WindowSpec, h: usize) -> Result<FeatureFrame> {
    let cache = FeatureCache::build(cohort, window)?;
    Ok(cache.frame(&cache.all_patients(), h))
}
