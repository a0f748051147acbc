//! Multi-subset early onset prediction.
//!
//! The crate turns hourly per-patient observation matrices into a design
//! matrix of raw values, first differences and trailing-window statistics,
//! then trains a cascade of horizon-specific gradient-boosted tree models.
//! Intermediate horizons (for example 3 hours ahead) produce probabilities
//! that enter the target-horizon model (6 hours ahead) as ordinary features.
//!
//! Modules follow the pipeline order:
//!
//! * [`cohort`]: CSV ingestion, carry-forward imputation, feature groups.
//! * [`labeling`]: horizon-shifted targets, onset truncation, day clipping.
//! * [`features`]: delta and window-statistic columns, design matrix assembly.
//! * [`sampling`]: random over/under-sampling of training rows.
//! * [`gbdt`]: second-order boosted trees with logistic loss.
//! * [`cascade`]: 1/2/6-subset training with out-of-fold intermediate probabilities.
//! * [`eval`]: AUROC, sensitivity/specificity and patient-level cross-validation.
//! * [`explain`]: local linear surrogate explanations and gain ranking.
//! * [`synth`]: seeded synthetic cohorts.
//! * [`experiment`]: end-to-end run configuration shared by the CLI.

pub mod cascade;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod features;
pub mod gbdt;
pub mod labeling;
pub mod sampling;
pub mod seed;
pub mod synth;

pub use cascade::{
    out_of_fold_probs, predict_cascade, train_cascade, CascadeModel, CascadeSpec, LeakageControl,
    OofProbs, SubsetMode,
};
pub use cohort::{
    carry_forward_impute, ingest_csv, select_groups, Cohort, FeatureGroup, FeatureSchema,
    PatientSeries, SchemaColumn,
};
pub use error::{Error, ErrorKind, Result};
pub use eval::{
    auroc, cross_validate, sensitivity_specificity, ConfusionCounts, EvalReport, FoldReport,
    RocPoint,
};
pub use experiment::{run_experiment, FeatureSet, RunConfig};
pub use explain::{local_surrogate, rank_features, Explanation};
pub use features::{
    assemble_design_matrix, delta_features, window_stats, FeatureFrame, NamedColumns, RowKey,
    WindowSpec,
};
pub use gbdt::{gain_importance, GbdtModel, TrainParams, TreeNode};
pub use labeling::{clip_to_day_range, shift_labels, truncate_after_onset, LabelTrack};
pub use sampling::{random_oversample, random_undersample, SamplerConfig};
pub use synth::{generate_cohort, SignalMode, SynthConfig};
