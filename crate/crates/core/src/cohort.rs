//! Hourly cohort data: schema, per-patient matrices, CSV ingestion and
//! carry-forward imputation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelTrack;

/// Feature groups: vital signs, static profile, cumulative exposures and
/// laboratory results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(alias = "g1")]
    G1,
    #[serde(alias = "g2")]
    G2,
    #[serde(alias = "g3")]
    G3,
    #[serde(alias = "g4")]
    G4,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [Self::G1, Self::G2, Self::G3, Self::G4];
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::G1 => "G1",
            Self::G2 => "G2",
            Self::G3 => "G3",
            Self::G4 => "G4",
        };
        f.write_str(s)
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "G1" | "1" => Ok(Self::G1),
            "G2" | "2" => Ok(Self::G2),
            "G3" | "3" => Ok(Self::G3),
            "G4" | "4" => Ok(Self::G4),
            other => Err(Error::Config(format!("unknown feature group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub group: FeatureGroup,
    /// Whether delta and window statistics are generated for this column.
    pub trendable: bool,
}

impl SchemaColumn {
    pub fn new(name: impl Into<String>, group: FeatureGroup, trendable: bool) -> Self {
        Self {
            name: name.into(),
            group,
            trendable,
        }
    }
}

/// Ordered feature columns. Serialized as a bare JSON list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SchemaColumn>", into = "Vec<SchemaColumn>")]
pub struct FeatureSchema {
    columns: Vec<SchemaColumn>,
}

const RESERVED: [&str; 3] = ["patient_id", "hour", "label"];

impl FeatureSchema {
    pub fn new(columns: Vec<SchemaColumn>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.trim().is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if RESERVED.contains(&c.name.as_str()) {
                return Err(Error::Schema(format!("`{}` is a reserved column", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(Self { columns })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn columns(&self) -> &[SchemaColumn] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn trendable_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].trendable)
            .collect()
    }

    pub fn groups(&self) -> BTreeSet<FeatureGroup> {
        self.columns.iter().map(|c| c.group).collect()
    }
}

impl TryFrom<Vec<SchemaColumn>> for FeatureSchema {
    type Error = Error;

    fn try_from(columns: Vec<SchemaColumn>) -> Result<Self> {
        Self::new(columns)
    }
}

impl From<FeatureSchema> for Vec<SchemaColumn> {
    fn from(schema: FeatureSchema) -> Self {
        schema.columns
    }
}

/// One patient's hourly `t x f` observation matrix.
///
/// Row `i` is hour `start_hour + i`. Unobserved cells hold `NaN` until
/// [`carry_forward_impute`] fills them; `observed` keeps the original mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSeries {
    pub patient_id: String,
    pub start_hour: i64,
    pub values: Vec<Vec<f64>>,
    pub observed: Vec<Vec<bool>>,
    pub labels: LabelTrack,
}

impl PatientSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hour(&self, row: usize) -> i64 {
        self.start_hour + row as i64
    }

    pub fn end_hour(&self) -> i64 {
        self.start_hour + self.values.len() as i64 - 1
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[col]).collect()
    }

    /// Keeps rows `range` (relative indices), adjusting hours and labels.
    pub(crate) fn slice_rows(&self, range: std::ops::Range<usize>) -> PatientSeries {
        PatientSeries {
            patient_id: self.patient_id.clone(),
            start_hour: self.start_hour + range.start as i64,
            values: self.values[range.clone()].to_vec(),
            observed: self.observed[range.clone()].to_vec(),
            labels: LabelTrack::new(self.labels.onset[range].to_vec()),
        }
    }

    fn check(&self, width: usize) -> Result<()> {
        let t = self.values.len();
        if self.observed.len() != t || self.labels.onset.len() != t {
            return Err(Error::Misaligned(format!(
                "patient {}: values, mask and labels differ in length",
                self.patient_id
            )));
        }
        if self
            .values
            .iter()
            .zip(&self.observed)
            .any(|(v, m)| v.len() != width || m.len() != width)
        {
            return Err(Error::Misaligned(format!(
                "patient {}: row width differs from schema ({width})",
                self.patient_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub schema: FeatureSchema,
    pub patients: Vec<PatientSeries>,
}

impl Cohort {
    pub fn new(schema: FeatureSchema, patients: Vec<PatientSeries>) -> Result<Self> {
        let mut ids = HashSet::new();
        for p in &patients {
            if !ids.insert(p.patient_id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate patient id `{}`",
                    p.patient_id
                )));
            }
            p.check(schema.len())?;
        }
        Ok(Self { schema, patients })
    }

    pub fn total_rows(&self) -> usize {
        self.patients.iter().map(|p| p.len()).sum()
    }

    /// Sub-cohort with the given patient indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            schema: self.schema.clone(),
            patients: indices.iter().map(|&i| self.patients[i].clone()).collect(),
        }
    }

    /// Writes the cohort in the ingestion CSV format. Unobserved cells are
    /// written empty so that observed values round-trip exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = RESERVED.to_vec();
        header.extend(self.schema.names());
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for p in &self.patients {
            for (i, (row, mask)) in p.values.iter().zip(&p.observed).enumerate() {
                record.clear();
                record.push(p.patient_id.clone());
                record.push(p.hour(i).to_string());
                record.push(p.labels.onset[i].to_string());
                for (v, &seen) in row.iter().zip(mask) {
                    record.push(if seen { v.to_string() } else { String::new() });
                }
                w.write_record(&record)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a cohort CSV file. See [`read_csv`].
pub fn ingest_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Cohort> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

struct RawRow {
    label: Option<u8>,
    cells: Vec<Option<f64>>,
    line: u64,
}

/// Parses `patient_id,hour,label,<schema columns...>` rows.
///
/// Patients appear in order of first occurrence; rows are sorted by hour and
/// hours missing inside a patient's span become fully unobserved rows. A gap
/// row inherits label 0 before the first onset and 1 after it. An empty label
/// cell is only accepted after the patient's first onset, since those rows are
/// removed by onset truncation.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Malformed {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let expected: Vec<&str> = RESERVED.iter().copied().chain(schema.names()).collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Malformed {
            line: 1,
            message: format!(
                "header does not match schema: expected `{}`",
                expected.join(",")
            ),
        });
    }

    let width = schema.len();
    let mut order: Vec<String> = Vec::new();
    let mut by_patient: HashMap<String, BTreeMap<i64, RawRow>> = HashMap::new();

    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Malformed { line, message };
        if record.len() != width + 3 {
            return Err(bad(format!(
                "expected {} fields, found {}",
                width + 3,
                record.len()
            )));
        }
        let pid = record[0].trim();
        if pid.is_empty() {
            return Err(bad("empty patient_id".into()));
        }
        let hour: i64 = record[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("hour `{}` is not an integer", &record[1])))?;
        let label = match record[2].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(bad(format!("label `{other}` is not 0, 1 or empty"))),
        };
        let mut cells = Vec::with_capacity(width);
        for (j, field) in record.iter().skip(3).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                cells.push(None);
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                _ => {
                    return Err(bad(format!(
                        "column `{}`: `{field}` is not a finite number",
                        schema.columns()[j].name
                    )))
                }
            }
        }
        let rows = by_patient.entry(pid.to_string()).or_insert_with(|| {
            order.push(pid.to_string());
            BTreeMap::new()
        });
        if rows.contains_key(&hour) {
            return Err(Error::DuplicateRow {
                patient_id: pid.to_string(),
                hour,
                line,
            });
        }
        rows.insert(hour, RawRow { label, cells, line });
    }

    let mut patients = Vec::with_capacity(order.len());
    for pid in order {
        let rows = by_patient.remove(&pid).expect("patient recorded");
        let first = *rows.keys().next().expect("at least one row");
        let last = *rows.keys().next_back().expect("at least one row");
        let t = (last - first + 1) as usize;
        let mut values = Vec::with_capacity(t);
        let mut observed = Vec::with_capacity(t);
        let mut onset = Vec::with_capacity(t);
        let mut after_onset = false;
        for hour in first..=last {
            match rows.get(&hour) {
                Some(raw) => {
                    let label = match raw.label {
                        Some(l) => l,
                        None if after_onset => 1,
                        None => {
                            return Err(Error::Malformed {
                                line: raw.line,
                                message: "empty label before the patient's first onset".into(),
                            })
                        }
                    };
                    after_onset |= label == 1;
                    onset.push(label);
                    observed.push(raw.cells.iter().map(Option::is_some).collect());
                    values.push(raw.cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect());
                }
                None => {
                    onset.push(u8::from(after_onset));
                    observed.push(vec![false; width]);
                    values.push(vec![f64::NAN; width]);
                }
            }
        }
        patients.push(PatientSeries {
            patient_id: pid,
            start_hour: first,
            values,
            observed,
            labels: LabelTrack::new(onset),
        });
    }
    Cohort::new(schema.clone(), patients)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-column median over every observed cell of the cohort.
pub fn column_medians(cohort: &Cohort) -> Result<Vec<f64>> {
    (0..cohort.schema.len())
        .map(|j| {
            let mut seen: Vec<f64> = cohort
                .patients
                .iter()
                .flat_map(|p| {
                    p.values
                        .iter()
                        .zip(&p.observed)
                        .filter(|(_, m)| m[j])
                        .map(|(v, _)| v[j])
                })
                .collect();
            if seen.is_empty() {
                return Err(Error::NeverObserved(cohort.schema.columns()[j].name.clone()));
            }
            Ok(median(&mut seen))
        })
        .collect()
}

/// Fills every unobserved cell with the patient's most recent observed value
/// of that column. Cells before the first observation take the cohort-wide
/// column median. The observed mask is left untouched.
pub fn carry_forward_impute(cohort: &Cohort) -> Result<Cohort> {
    let medians = column_medians(cohort)?;
    let patients = cohort
        .patients
        .iter()
        .map(|p| {
            let mut out = p.clone();
            for (j, &fallback) in medians.iter().enumerate() {
                let mut last = fallback;
                for (row, mask) in out.values.iter_mut().zip(&p.observed) {
                    if mask[j] {
                        last = row[j];
                    } else {
                        row[j] = last;
                    }
                }
            }
            out
        })
        .collect();
    Ok(Cohort {
        schema: cohort.schema.clone(),
        patients,
    })
}

/// Keeps only the columns whose group is selected, preserving order.
pub fn select_groups(cohort: &Cohort, groups: &BTreeSet<FeatureGroup>) -> Result<Cohort> {
    if groups.is_empty() {
        return Err(Error::EmptySelection);
    }
    let keep: Vec<usize> = (0..cohort.schema.len())
        .filter(|&j| groups.contains(&cohort.schema.columns()[j].group))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    let schema = FeatureSchema::new(
        keep.iter()
            .map(|&j| cohort.schema.columns()[j].clone())
            .collect(),
    )?;
    let pick = |row: &Vec<f64>| keep.iter().map(|&j| row[j]).collect::<Vec<_>>();
    let pick_mask = |row: &Vec<bool>| keep.iter().map(|&j| row[j]).collect::<Vec<_>>();
    let patients = cohort
        .patients
        .iter()
        .map(|p| PatientSeries {
            patient_id: p.patient_id.clone(),
            start_hour: p.start_hour,
            values: p.values.iter().map(pick).collect(),
            observed: p.observed.iter().map(pick_mask).collect(),
            labels: p.labels.clone(),
        })
        .collect();
    Ok(Cohort { schema, patients })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            SchemaColumn::new("hr", FeatureGroup::G1, true),
            SchemaColumn::new("age", FeatureGroup::G2, false),
            SchemaColumn::new("bolus", FeatureGroup::G3, true),
        ])
        .unwrap()
    }

    fn parse(text: &str) -> Result<Cohort> {
        read_csv(text.as_bytes(), &schema())
    }

    #[test]
    fn complete_file_two_patients() {
        let c = parse(
            "patient_id,hour,label,hr,age,bolus\n\
             a,0,0,80,50,0\na,1,0,82,50,1\na,2,1,90,50,1\n\
             b,5,0,70,30,0\nb,6,0,71,30,0\nb,7,0,72,30,0\n",
        )
        .unwrap();
        assert_eq!(c.patients.len(), 2);
        assert!(c.patients.iter().all(|p| p.len() == 3));
        assert_eq!(c.patients[1].start_hour, 5);
        assert_eq!(c.patients[0].labels.onset, vec![0, 0, 1]);
        assert!(c.patients[0].observed.iter().flatten().all(|&m| m));
    }

    #[test]
    fn hour_gap_is_materialized_as_missing_row() {
        let c = parse("patient_id,hour,label,hr,age,bolus\na,1,0,80,50,0\na,3,0,84,50,2\n").unwrap();
        let p = &c.patients[0];
        // hours 1, 2, 3
        let expected_rows = (3 - 1 + 1) as usize;
        assert_eq!(p.len(), expected_rows);
        assert_eq!(p.observed[1], vec![false, false, false]);
        assert!(p.values[1].iter().all(|v| v.is_nan()));
        assert_eq!(p.labels.onset, vec![0, 0, 0]);
    }

    #[test]
    fn rows_sorted_by_hour() {
        let c = parse("patient_id,hour,label,hr,age,bolus\na,2,0,3,1,1\na,0,0,1,1,1\na,1,0,2,1,1\n").unwrap();
        assert_eq!(c.patients[0].column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.patients[0].start_hour, 0);
    }

    #[test]
    fn duplicate_patient_hour_rejected() {
        let err = parse("patient_id,hour,label,hr,age,bolus\np1,5,0,1,1,1\np1,5,0,2,1,1\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateRow { hour: 5, line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let err = parse("patient_id,hour,label,hr,age,bolus\na,0,0,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
        let err = parse("patient_id,hour,label,hr,age,bolus\na,0,0,1,1,1\na,1,0,x,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");
        let err = parse("patient_id,hour,label,hr,age,bolus\na,0,2,1,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
        let err = parse("patient_id,hour,label,hr,bolus,age\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
    }

    #[test]
    fn empty_label_only_after_onset() {
        assert!(parse("patient_id,hour,label,hr,age,bolus\na,0,,1,1,1\n").is_err());
        let c = parse("patient_id,hour,label,hr,age,bolus\na,0,1,1,1,1\na,1,,1,1,1\n").unwrap();
        assert_eq!(c.patients[0].labels.onset, vec![1, 1]);
    }

    #[test]
    fn csv_round_trip_preserves_observed_values() {
        let text = "patient_id,hour,label,hr,age,bolus\n\
                    a,0,0,80.125,,0\na,1,0,,50,0.1\na,2,1,0.30000000000000004,50,1e-7\n";
        let c = parse(text).unwrap();
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        let again = read_csv(out.as_slice(), &schema()).unwrap();
        for (p, q) in c.patients.iter().zip(&again.patients) {
            assert_eq!(p.observed, q.observed);
            for (r, s) in p.values.iter().zip(&q.values) {
                for (x, y) in r.iter().zip(s) {
                    assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
                }
            }
        }
    }

    fn one_column_cohort(cols: &[Vec<Option<f64>>]) -> Cohort {
        let schema = FeatureSchema::new(vec![SchemaColumn::new("x", FeatureGroup::G1, true)]).unwrap();
        let patients = cols
            .iter()
            .enumerate()
            .map(|(i, col)| PatientSeries {
                patient_id: format!("p{i}"),
                start_hour: 0,
                values: col.iter().map(|v| vec![v.unwrap_or(f64::NAN)]).collect(),
                observed: col.iter().map(|v| vec![v.is_some()]).collect(),
                labels: LabelTrack::new(vec![0; col.len()]),
            })
            .collect();
        Cohort::new(schema, patients).unwrap()
    }

    #[test]
    fn carry_forward_fills_gaps() {
        let c = one_column_cohort(&[vec![Some(5.0), None, None, Some(7.0)]]);
        let out = carry_forward_impute(&c).unwrap();
        assert_eq!(out.patients[0].column(0), vec![5.0, 5.0, 5.0, 7.0]);
        assert_eq!(out.patients[0].observed, c.patients[0].observed);
    }

    #[test]
    fn leading_gap_takes_cohort_median() {
        // Observed values across the cohort: 4, 6, 8, 9, 2, 7 -> sorted 2 4 6 7 8 9.
        let mut sorted = vec![4.0, 6.0, 8.0, 9.0, 2.0, 7.0];
        sorted.sort_by(f64::total_cmp);
        let oracle = 0.5 * (sorted[2] + sorted[3]);
        assert_eq!(oracle, 6.5);

        let c = one_column_cohort(&[
            vec![None, Some(4.0), None],
            vec![Some(6.0), Some(8.0), Some(9.0)],
            vec![Some(2.0), Some(7.0)],
        ]);
        let out = carry_forward_impute(&c).unwrap();
        assert_eq!(out.patients[0].column(0), vec![oracle, 4.0, 4.0]);
    }

    #[test]
    fn median_six_example() {
        let c = one_column_cohort(&[vec![None, Some(4.0), None], vec![Some(6.0)], vec![Some(8.0)]]);
        let out = carry_forward_impute(&c).unwrap();
        assert_eq!(out.patients[0].column(0), vec![6.0, 4.0, 4.0]);
    }

    #[test]
    fn fully_observed_is_unchanged() {
        let c = one_column_cohort(&[vec![Some(1.0), Some(2.0)], vec![Some(3.0)]]);
        assert_eq!(carry_forward_impute(&c).unwrap(), c);
    }

    #[test]
    fn never_observed_column_is_an_error() {
        let c = one_column_cohort(&[vec![None, None]]);
        assert!(matches!(carry_forward_impute(&c), Err(Error::NeverObserved(n)) if n == "x"));
    }

    #[test]
    fn select_groups_filters_and_errors() {
        let c = parse("patient_id,hour,label,hr,age,bolus\na,0,0,1,2,3\n").unwrap();
        let g12: BTreeSet<_> = [FeatureGroup::G1, FeatureGroup::G2].into();
        let s = select_groups(&c, &g12).unwrap();
        assert_eq!(s.schema.names().collect::<Vec<_>>(), ["hr", "age"]);
        assert_eq!(s.patients[0].values[0], vec![1.0, 2.0]);

        let all: BTreeSet<_> = FeatureGroup::ALL.into();
        assert_eq!(select_groups(&c, &all).unwrap(), c);

        let g4: BTreeSet<_> = [FeatureGroup::G4].into();
        assert!(matches!(select_groups(&c, &g4), Err(Error::EmptySelection)));
        assert!(select_groups(&c, &BTreeSet::new()).is_err());
    }

    #[test]
    fn schema_json_is_a_plain_list() {
        let s = schema();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with('['));
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let dup = r#"[{"name":"a","group":"G1","trendable":true},{"name":"a","group":"G2","trendable":false}]"#;
        assert!(serde_json::from_str::<FeatureSchema>(dup).is_err());
    }
}
