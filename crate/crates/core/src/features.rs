//! Design-matrix construction: raw values, hourly deltas and trailing-window
//! statistics for trendable columns, plus appended cascade columns.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureSchema, PatientSeries};
use crate::error::{Error, Result};

/// Standard deviation below which skewness and kurtosis are reported as 0.
pub const DEGENERATE_STD: f64 = 1e-12;

pub const STAT_SUFFIXES: [&str; 6] = ["mean", "min", "max", "std", "skew", "kurt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Observation window length in hours; statistics use up to `w + 1` samples.
    pub w: usize,
    pub enable_delta: bool,
    pub enable_stats: bool,
}

impl WindowSpec {
    pub fn new(w: usize, enable_delta: bool, enable_stats: bool) -> Result<Self> {
        if w < 1 {
            return Err(Error::Config("observation window must be at least 1 hour".into()));
        }
        Ok(Self {
            w,
            enable_delta,
            enable_stats,
        })
    }

    pub fn baseline(w: usize) -> Self {
        Self {
            w,
            enable_delta: false,
            enable_stats: false,
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            w: 6,
            enable_delta: true,
            enable_stats: true,
        }
    }
}

pub type NamedColumns = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub patient_id: Arc<str>,
    pub hour: i64,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.patient_id, self.hour)
    }
}

/// Columns keyed by `(patient, hour)` rows, for appending to a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedColumns {
    pub rows: Vec<RowKey>,
    pub columns: NamedColumns,
}

/// Column-major design matrix with one row per retained `(patient, hour)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub rows: Vec<RowKey>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<u8>,
}

impl FeatureFrame {
    pub fn new(
        rows: Vec<RowKey>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target: Vec<u8>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Misaligned(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = rows.len();
        if target.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Misaligned("column lengths differ from row count".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Misaligned(format!("duplicate column `{dup}`")));
        }
        Ok(Self {
            rows,
            names,
            columns,
            target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&y| y == 1).count()
    }

    /// Rows picked (and possibly repeated) by index.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureFrame {
        FeatureFrame {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
        }
    }

    pub fn append(&mut self, extra: &KeyedColumns) -> Result<()> {
        if extra.rows != self.rows {
            return Err(Error::Misaligned(format!(
                "extra columns cover {} rows, frame has {} (or keys differ)",
                extra.rows.len(),
                self.rows.len()
            )));
        }
        for (name, col) in &extra.columns {
            if col.len() != self.rows.len() {
                return Err(Error::Misaligned(format!("column `{name}` has wrong length")));
            }
            if self.names.iter().any(|n| n == name) {
                return Err(Error::Misaligned(format!("duplicate column `{name}`")));
            }
            self.names.push(name.clone());
            self.columns.push(col.clone());
        }
        Ok(())
    }

    /// Debug export: `patient_id,hour,target,<columns...>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["patient_id".to_string(), "hour".into(), "target".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![
                self.rows[i].patient_id.to_string(),
                self.rows[i].hour.to_string(),
                self.target[i].to_string(),
            ];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Summary of one trailing window, population (divisor `N`) moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub skew: f64,
    pub kurt: f64,
}

impl WindowSummary {
    pub fn of(window: &[f64]) -> Self {
        assert!(!window.is_empty(), "window must hold at least one sample");
        let n = window.len() as f64;
        let mean = window.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &x in window {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            min = min.min(x);
            max = max.max(x);
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let std = m2.sqrt();
        let (skew, kurt) = if std < DEGENERATE_STD {
            (0.0, 0.0)
        } else {
            (m3 / (m2 * std), m4 / (m2 * m2))
        };
        Self {
            mean,
            min,
            max,
            std,
            skew,
            kurt,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.mean, self.min, self.max, self.std, self.skew, self.kurt]
    }
}

fn first_differences(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev = None;
    for &x in values {
        out.push(prev.map_or(0.0, |p| x - p));
        prev = Some(x);
    }
    out
}

fn trailing_summaries(values: &[f64], w: usize) -> Vec<WindowSummary> {
    (0..values.len())
        .map(|t| WindowSummary::of(&values[t.saturating_sub(w)..=t]))
        .collect()
}

/// `<f>_delta = x[t] - x[t-1]` for every trendable column; 0 on the first row.
pub fn delta_features(series: &PatientSeries, schema: &FeatureSchema) -> NamedColumns {
    schema
        .trendable_indices()
        .into_iter()
        .map(|j| {
            (
                format!("{}_delta", schema.columns()[j].name),
                first_differences(&series.column(j)),
            )
        })
        .collect()
}

/// Six trailing-window statistics per trendable column over
/// `[x[t-w], ..., x[t]]`, using the available prefix near the series start.
pub fn window_stats(
    series: &PatientSeries,
    schema: &FeatureSchema,
    spec: &WindowSpec,
) -> NamedColumns {
    let mut out = NamedColumns::new();
    for j in schema.trendable_indices() {
        let name = &schema.columns()[j].name;
        let summaries = trailing_summaries(&series.column(j), spec.w);
        for (k, suffix) in STAT_SUFFIXES.iter().enumerate() {
            out.push((
                format!("{name}_{suffix}"),
                summaries.iter().map(|s| s.as_array()[k]).collect(),
            ));
        }
    }
    out
}

/// Column names produced for `schema` under `spec`, in frame order.
pub fn base_feature_names(schema: &FeatureSchema, spec: &WindowSpec) -> Vec<String> {
    let mut names: Vec<String> = schema.names().map(str::to_string).collect();
    let trend: Vec<&str> = schema
        .trendable_indices()
        .into_iter()
        .map(|j| schema.columns()[j].name.as_str())
        .collect();
    if spec.enable_delta {
        names.extend(trend.iter().map(|n| format!("{n}_delta")));
    }
    if spec.enable_stats {
        for n in &trend {
            names.extend(STAT_SUFFIXES.iter().map(|s| format!("{n}_{s}")));
        }
    }
    names
}

/// Name of the appended probability column for an intermediate horizon.
pub fn subset_prob_name(horizon: usize) -> String {
    format!("subset_prob_{horizon}hr")
}

/// Base features of one patient for every hour, row-major.
#[derive(Debug, Clone)]
pub(crate) struct PatientBlock {
    pub patient_id: Arc<str>,
    pub start_hour: i64,
    pub rows: Vec<Vec<f64>>,
    pub onset: Vec<u8>,
}

impl PatientBlock {
    fn build(series: &PatientSeries, schema: &FeatureSchema, spec: &WindowSpec) -> Self {
        let mut cols: Vec<Vec<f64>> = (0..schema.len()).map(|j| series.column(j)).collect();
        if spec.enable_delta {
            cols.extend(delta_features(series, schema).into_iter().map(|(_, c)| c));
        }
        if spec.enable_stats {
            cols.extend(window_stats(series, schema, spec).into_iter().map(|(_, c)| c));
        }
        let rows = (0..series.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        Self {
            patient_id: Arc::from(series.patient_id.as_str()),
            start_hour: series.start_hour,
            rows,
            onset: series.labels.onset.clone(),
        }
    }

    /// Number of rows that carry a target at horizon `h`.
    pub fn rows_at(&self, h: usize) -> usize {
        self.rows.len().saturating_sub(h)
    }

    pub fn has_positive_at(&self, h: usize) -> bool {
        self.onset.iter().skip(h).any(|&y| y == 1)
    }
}

/// Base features for a whole cohort, computed once and sliced per horizon
/// and patient subset.
#[derive(Debug, Clone)]
pub(crate) struct FeatureCache {
    pub names: Vec<String>,
    /// True for raw columns that are not trendable (static or count-coded).
    pub static_mask: Vec<bool>,
    pub blocks: Vec<PatientBlock>,
}

impl FeatureCache {
    pub fn build(cohort: &Cohort, spec: &WindowSpec) -> Result<Self> {
        check_finite(cohort)?;
        let blocks = cohort
            .patients
            .par_iter()
            .map(|p| PatientBlock::build(p, &cohort.schema, spec))
            .collect();
        let names = base_feature_names(&cohort.schema, spec);
        let mut static_mask = vec![false; names.len()];
        for (j, c) in cohort.schema.columns().iter().enumerate() {
            static_mask[j] = !c.trendable;
        }
        Ok(Self {
            names,
            static_mask,
            blocks,
        })
    }

    pub fn all_patients(&self) -> Vec<usize> {
        (0..self.blocks.len()).collect()
    }

    /// Row keys at horizon `h` for the given patients, in frame order.
    pub fn keys(&self, patients: &[usize], h: usize) -> Vec<RowKey> {
        patients
            .iter()
            .flat_map(|&p| {
                let b = &self.blocks[p];
                (0..b.rows_at(h)).map(move |i| RowKey {
                    patient_id: b.patient_id.clone(),
                    hour: b.start_hour + i as i64,
                })
            })
            .collect()
    }

    /// Frame at horizon `h`: row `i` of each patient with target `onset[i + h]`.
    /// Patients too short for the horizon contribute no rows.
    pub fn frame(&self, patients: &[usize], h: usize) -> FeatureFrame {
        let n: usize = patients.iter().map(|&p| self.blocks[p].rows_at(h)).sum();
        let width = self.names.len();
        let mut columns = vec![Vec::with_capacity(n); width];
        let mut target = Vec::with_capacity(n);
        for &p in patients {
            let b = &self.blocks[p];
            for i in 0..b.rows_at(h) {
                for (col, &v) in columns.iter_mut().zip(&b.rows[i]) {
                    col.push(v);
                }
                target.push(b.onset[i + h]);
            }
        }
        FeatureFrame {
            rows: self.keys(patients, h),
            names: self.names.clone(),
            columns,
            target,
        }
    }
}

fn check_finite(cohort: &Cohort) -> Result<()> {
    for p in &cohort.patients {
        for (i, row) in p.values.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    column: cohort.schema.columns()[j].name.clone(),
                    row: i,
                });
            }
        }
    }
    Ok(())
}

/// Builds the design matrix for a cohort whose labels have been shifted to
/// the target horizon.
///
/// Columns are the raw schema columns, then deltas and window statistics
/// when enabled, then `extra` columns (for example `subset_prob_3hr`) which
/// must be keyed to exactly the frame's rows.
pub fn assemble_design_matrix(
    cohort: &Cohort,
    spec: &WindowSpec,
    extra: Option<&KeyedColumns>,
) -> Result<FeatureFrame> {
    check_finite(cohort)?;
    let names = base_feature_names(&cohort.schema, spec);
    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for p in &cohort.patients {
        let shifted = p.labels.shifted.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "labels of patient {} are not shifted to a horizon",
                p.patient_id
            ))
        })?;
        let block = PatientBlock::build(p, &cohort.schema, spec);
        for (i, &y) in shifted.iter().enumerate() {
            rows.push(RowKey {
                patient_id: block.patient_id.clone(),
                hour: p.hour(i),
            });
            target.push(y);
            for (col, &v) in columns.iter_mut().zip(&block.rows[i]) {
                col.push(v);
            }
        }
    }
    let mut frame = FeatureFrame::new(rows, names, columns, target)?;
    if let Some(extra) = extra {
        frame.append(extra)?;
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{FeatureGroup, SchemaColumn};
    use crate::labeling::{shift_labels, LabelTrack};

    fn schema(n_trend: usize, n_static: usize) -> FeatureSchema {
        let mut cols: Vec<_> = (0..n_trend)
            .map(|i| SchemaColumn::new(format!("v{i}"), FeatureGroup::G1, true))
            .collect();
        cols.extend((0..n_static).map(|i| SchemaColumn::new(format!("s{i}"), FeatureGroup::G2, false)));
        FeatureSchema::new(cols).unwrap()
    }

    fn series(rows: Vec<Vec<f64>>) -> PatientSeries {
        let t = rows.len();
        let f = rows[0].len();
        PatientSeries {
            patient_id: "p".into(),
            start_hour: 10,
            values: rows,
            observed: vec![vec![true; f]; t],
            labels: LabelTrack::new(vec![0; t]),
        }
    }

    #[test]
    fn heart_rate_drop_gives_minus_five() {
        let s = series(vec![vec![75.0], vec![70.0]]);
        let d = delta_features(&s, &schema(1, 0));
        assert_eq!(d[0].0, "v0_delta");
        // hour 11 is the second row
        assert_eq!(s.hour(1), 11);
        assert_eq!(d[0].1, vec![0.0, -5.0]);
    }

    #[test]
    fn constant_column_has_zero_deltas_and_degenerate_stats() {
        let s = series(vec![vec![2.0]; 5]);
        assert!(delta_features(&s, &schema(1, 0))[0].1.iter().all(|&d| d == 0.0));
        let st = window_stats(&s, &schema(1, 0), &WindowSpec::default());
        for (name, col) in &st {
            let expected = if name.ends_with("std") || name.ends_with("skew") || name.ends_with("kurt") {
                0.0
            } else {
                2.0
            };
            assert!(col.iter().all(|&v| v == expected), "{name}");
        }
    }

    #[test]
    fn summary_of_one_two_three() {
        let s = WindowSummary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 0.816_496_580_927_726).abs() < 1e-12);
        assert_eq!(s.skew, 0.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
    }

    #[test]
    fn single_sample_window() {
        let s = WindowSummary::of(&[4.5]);
        assert_eq!(s.as_array(), [4.5, 4.5, 4.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_holds_w_plus_one_samples() {
        let s = series((0..10).map(|i| vec![i as f64]).collect());
        let spec = WindowSpec::new(3, false, true).unwrap();
        let st = window_stats(&s, &schema(1, 0), &spec);
        let min = &st.iter().find(|(n, _)| n == "v0_min").unwrap().1;
        let mean = &st.iter().find(|(n, _)| n == "v0_mean").unwrap().1;
        assert_eq!(min[..5], [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(mean[9], (6.0 + 7.0 + 8.0 + 9.0) / 4.0);
    }

    fn shifted_cohort(schema: FeatureSchema, t: usize, h: usize) -> Cohort {
        let f = schema.len();
        let mut s = series((0..t).map(|i| (0..f).map(|j| (i * j) as f64).collect()).collect());
        s.labels = shift_labels(&s.labels, h).unwrap();
        Cohort::new(schema, vec![s]).unwrap()
    }

    #[test]
    fn baseline_frame_has_raw_columns_only() {
        let c = shifted_cohort(schema(2, 1), 8, 3);
        let f = assemble_design_matrix(&c, &WindowSpec::baseline(6), None).unwrap();
        assert_eq!(f.names, ["v0", "v1", "s0"]);
        assert_eq!(f.n_rows(), 5);
        assert_eq!(f.rows[0].hour, 10);
    }

    #[test]
    fn delta_and_stats_column_count() {
        let c = shifted_cohort(schema(6, 0), 10, 0);
        let f = assemble_design_matrix(&c, &WindowSpec::default(), None).unwrap();
        assert_eq!(f.n_cols(), 6 * (1 + 1 + 6));
        assert!(f.names.contains(&"v3_delta".to_string()));
        assert!(f.names.contains(&"v5_kurt".to_string()));
    }

    #[test]
    fn extra_columns_append_last_and_must_align() {
        let c = shifted_cohort(schema(1, 1), 6, 2);
        let base = assemble_design_matrix(&c, &WindowSpec::baseline(6), None).unwrap();
        let extra = KeyedColumns {
            rows: base.rows.clone(),
            columns: vec![(subset_prob_name(3), vec![0.5; base.n_rows()])],
        };
        let f = assemble_design_matrix(&c, &WindowSpec::baseline(6), Some(&extra)).unwrap();
        assert_eq!(f.names.last().unwrap(), "subset_prob_3hr");
        assert_eq!(f.n_cols(), base.n_cols() + 1);

        let short = KeyedColumns {
            rows: base.rows[1..].to_vec(),
            columns: vec![("subset_prob_3hr".into(), vec![0.5; base.n_rows() - 1])],
        };
        assert!(matches!(
            assemble_design_matrix(&c, &WindowSpec::baseline(6), Some(&short)),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn unshifted_labels_are_rejected() {
        let s = series(vec![vec![1.0]; 3]);
        let c = Cohort::new(schema(1, 0), vec![s]).unwrap();
        assert!(assemble_design_matrix(&c, &WindowSpec::default(), None).is_err());
    }

    #[test]
    fn cache_frame_matches_assembly() {
        let sch = schema(2, 1);
        let f = sch.len();
        let raw = series((0..9).map(|i| (0..f).map(|j| ((i + 1) * (j + 2)) as f64 % 7.0).collect()).collect());
        let mut shifted = raw.clone();
        shifted.labels = shift_labels(&raw.labels, 4).unwrap();
        let spec = WindowSpec::default();
        let direct = assemble_design_matrix(&Cohort::new(sch.clone(), vec![shifted]).unwrap(), &spec, None).unwrap();
        let cache = FeatureCache::build(&Cohort::new(sch, vec![raw]).unwrap(), &spec).unwrap();
        assert_eq!(cache.frame(&[0], 4), direct);
    }
}
