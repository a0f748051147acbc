//! Seeded synthetic ICU cohorts.
//!
//! Vital signs follow an AR(1) process around per-patient baselines, static
//! profile columns are drawn once per patient, cumulative exposures only
//! grow, and laboratory values are sparse. Event patients deteriorate before
//! onset: a linear drift over the last `pre_onset_ramp_hours` (progressive
//! mode) or a step change in the final two hours (sudden mode). In sudden
//! mode the step sits on top of a drift scaled by `sudden_precursor`, so rows
//! several hours before onset still carry some signal.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureGroup, FeatureSchema, PatientSeries, SchemaColumn};
use crate::error::{Error, Result};
use crate::labeling::{day_start_hour, LabelTrack};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Progressive,
    Sudden,
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "progressive" => Ok(Self::Progressive),
            "sudden" => Ok(Self::Sudden),
            other => Err(Error::Config(format!("unknown signal mode `{other}`"))),
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Progressive => "progressive",
            Self::Sudden => "sudden",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub event_rate: f64,
    /// Inclusive range of stay lengths in hours.
    pub stay_hours: (usize, usize),
    /// Inclusive range of onset days (day 1 = hours 0-23).
    pub onset_day_range: (u32, u32),
    pub signal_mode: SignalMode,
    pub pre_onset_ramp_hours: usize,
    /// Sudden mode only: peak level of the drift preceding the step, as a
    /// fraction of the full effect.
    pub sudden_precursor: f64,
    /// Multiplier on every deterioration effect.
    pub signal_strength: f64,
    /// Per-cell probability that a value is not recorded.
    pub missingness: BTreeMap<FeatureGroup, f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 500,
            event_rate: 0.17,
            stay_hours: (36, 84),
            onset_day_range: (2, 4),
            signal_mode: SignalMode::Progressive,
            pre_onset_ramp_hours: 12,
            sudden_precursor: 1.0,
            signal_strength: 0.5,
            missingness: [
                (FeatureGroup::G1, 0.05),
                (FeatureGroup::G2, 0.0),
                (FeatureGroup::G3, 0.0),
                (FeatureGroup::G4, 0.85),
            ]
            .into(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.event_rate) {
            return bad(format!("event_rate {} outside [0, 1]", self.event_rate));
        }
        for (g, r) in &self.missingness {
            if !(0.0..=1.0).contains(r) {
                return bad(format!("missingness for {g} outside [0, 1]"));
            }
        }
        let (lo, hi) = self.stay_hours;
        if lo < 1 || hi < lo {
            return bad(format!("invalid stay range {lo}..={hi}"));
        }
        let (d0, d1) = self.onset_day_range;
        if !(2..=14).contains(&d0) || !(2..=14).contains(&d1) || d1 < d0 {
            return bad(format!("onset days {d0}..={d1} must lie within 2..=14"));
        }
        if self.pre_onset_ramp_hours == 0 {
            return bad("pre_onset_ramp_hours must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.sudden_precursor) {
            return bad(format!("sudden_precursor {} outside [0, 1]", self.sudden_precursor));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be finite and >= 0".into());
        }
        Ok(())
    }

    fn miss(&self, g: FeatureGroup) -> f64 {
        self.missingness.get(&g).copied().unwrap_or(0.0)
    }
}

/// Vital-sign process parameters and full deterioration effect.
struct Vital {
    name: &'static str,
    mean: f64,
    between_sd: f64,
    innovation_sd: f64,
    effect: f64,
    range: (f64, f64),
}

const VITALS: [Vital; 6] = [
    Vital { name: "hr", mean: 88.0, between_sd: 12.0, innovation_sd: 2.5, effect: 16.0, range: (30.0, 220.0) },
    Vital { name: "dbp", mean: 62.0, between_sd: 8.0, innovation_sd: 2.0, effect: -4.0, range: (20.0, 140.0) },
    Vital { name: "map", mean: 80.0, between_sd: 9.0, innovation_sd: 2.5, effect: -9.0, range: (30.0, 160.0) },
    Vital { name: "rr", mean: 18.0, between_sd: 3.5, innovation_sd: 1.0, effect: 5.0, range: (4.0, 60.0) },
    Vital { name: "temp", mean: 37.0, between_sd: 0.4, innovation_sd: 0.1, effect: 0.9, range: (33.0, 42.0) },
    Vital { name: "fio2", mean: 0.40, between_sd: 0.08, innovation_sd: 0.015, effect: 0.04, range: (0.21, 1.0) },
];

const AR_COEF: f64 = 0.8;

struct Lab {
    name: &'static str,
    mean: f64,
    between_sd: f64,
    noise_sd: f64,
    effect: f64,
    trendable: bool,
}

const LABS: [Lab; 4] = [
    Lab { name: "bicarb", mean: 24.0, between_sd: 2.5, noise_sd: 1.0, effect: -3.0, trendable: true },
    Lab { name: "bun", mean: 20.0, between_sd: 7.0, noise_sd: 2.0, effect: 6.0, trendable: true },
    Lab { name: "creatinine", mean: 1.0, between_sd: 0.25, noise_sd: 0.08, effect: 0.4, trendable: true },
    Lab { name: "wbc", mean: 10.0, between_sd: 3.0, noise_sd: 1.0, effect: 3.0, trendable: false },
];

/// Column layout of generated cohorts.
pub fn synthetic_schema() -> FeatureSchema {
    let mut cols: Vec<SchemaColumn> = VITALS
        .iter()
        .map(|v| SchemaColumn::new(v.name, FeatureGroup::G1, true))
        .collect();
    for name in ["age", "sex", "transfer", "head_injury", "apache"] {
        cols.push(SchemaColumn::new(name, FeatureGroup::G2, false));
    }
    cols.push(SchemaColumn::new("bolus_sum", FeatureGroup::G3, true));
    cols.push(SchemaColumn::new("vent_day_sum", FeatureGroup::G3, false));
    cols.extend(
        LABS.iter()
            .map(|l| SchemaColumn::new(l.name, FeatureGroup::G4, l.trendable)),
    );
    FeatureSchema::new(cols).expect("static schema is valid")
}

/// Deterioration level in `[0, 1]` at `hour` for a patient with onset at
/// `onset`.
fn severity(mode: SignalMode, ramp: usize, precursor: f64, onset: i64, hour: i64) -> f64 {
    let drift = ((hour - (onset - ramp as i64)) as f64 / ramp as f64).clamp(0.0, 1.0);
    match mode {
        SignalMode::Progressive => drift,
        SignalMode::Sudden if hour >= onset - 2 => 1.0,
        SignalMode::Sudden => precursor * drift,
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite, non-negative sd")
}

pub fn generate_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let (stay_lo, stay_hi) = cfg.stay_hours;
    let (d0, d1) = cfg.onset_day_range;
    let earliest_onset = day_start_hour(d0);
    if earliest_onset > stay_lo as i64 - 1 {
        return Err(Error::Config(format!(
            "onset day {d0} starts at hour {earliest_onset}, after the end of the shortest stay ({stay_lo} h)"
        )));
    }
    let latest_onset = day_start_hour(d1) + 23;
    let schema = synthetic_schema();
    let std_normal = normal(0.0, 1.0);
    let strength = cfg.signal_strength;

    let mut patients = Vec::with_capacity(cfg.n_patients);
    for pid in 0..cfg.n_patients {
        // Bolus draws depend on severity, so they get their own stream: the
        // same seed then yields the same baseline noise in both signal modes.
        let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::TAG_SYNTH_PATIENT, pid as u64]));
        let mut bolus_rng = seed::rng(seed::derive(cfg.seed, &[seed::TAG_SYNTH_BOLUS, pid as u64]));
        let stay = rng.random_range(stay_lo..=stay_hi);
        let event = rng.random_bool(cfg.event_rate);
        let onset = if event {
            let hi = latest_onset.min(stay as i64 - 1);
            Some(rng.random_range(earliest_onset..=hi))
        } else {
            None
        };
        let sev = |hour: i64| {
            onset.map_or(0.0, |o| {
                strength * severity(cfg.signal_mode, cfg.pre_onset_ramp_hours, cfg.sudden_precursor, o, hour)
            })
        };

        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(schema.len());
        for v in &VITALS {
            let base = normal(v.mean, v.between_sd).sample(&mut rng);
            let mut noise = normal(0.0, v.innovation_sd / (1.0 - AR_COEF * AR_COEF).sqrt()).sample(&mut rng);
            let col = (0..stay as i64)
                .map(|h| {
                    if h > 0 {
                        noise = AR_COEF * noise + v.innovation_sd * std_normal.sample(&mut rng);
                    }
                    (base + noise + v.effect * sev(h)).clamp(v.range.0, v.range.1)
                })
                .collect();
            cols.push(col);
        }

        let risk = if event { 1.0 } else { 0.0 };
        let statics = [
            rng.random_range(16.0_f64..90.0).round(),
            f64::from(u8::from(rng.random_bool(0.7))),
            f64::from(u8::from(rng.random_bool(0.3))),
            f64::from(u8::from(rng.random_bool(0.35))),
            (normal(18.0, 6.0).sample(&mut rng) + 2.0 * risk).round().max(0.0),
        ];
        for s in statics {
            cols.push(vec![s; stay]);
        }

        let mut bolus = 0.0;
        let bolus_col = (0..stay as i64)
            .map(|h| {
                let rate = 0.08 + 0.25 * sev(h);
                if bolus_rng.random_bool(rate.min(1.0)) {
                    bolus += bolus_rng.random_range(250.0_f64..1000.0).round();
                }
                bolus
            })
            .collect();
        cols.push(bolus_col);
        cols.push((0..stay).map(|h| (h / 24) as f64).collect());

        for l in &LABS {
            let base = normal(l.mean, l.between_sd).sample(&mut rng);
            let col = (0..stay as i64)
                .map(|h| (base + l.noise_sd * std_normal.sample(&mut rng) + l.effect * sev(h)).max(0.0))
                .collect();
            cols.push(col);
        }

        let observed: Vec<Vec<bool>> = (0..stay)
            .map(|_| {
                schema
                    .columns()
                    .iter()
                    .map(|c| !rng.random_bool(cfg.miss(c.group)))
                    .collect()
            })
            .collect();
        let values = (0..stay)
            .map(|t| {
                cols.iter()
                    .zip(&observed[t])
                    .map(|(c, &seen)| if seen { round6(c[t]) } else { f64::NAN })
                    .collect()
            })
            .collect();
        let onset_track = (0..stay as i64)
            .map(|h| u8::from(onset.is_some_and(|o| h >= o)))
            .collect();
        patients.push(PatientSeries {
            patient_id: format!("P{pid:05}"),
            start_hour: 0,
            values,
            observed,
            labels: LabelTrack::new(onset_track),
        });
    }
    Cohort::new(schema, patients)
}

/// Six decimals keeps CSV files compact and exactly reproducible.
fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_event_rate_has_no_positives() {
        let c = generate_cohort(&SynthConfig { n_patients: 50, event_rate: 0.0, ..Default::default() }).unwrap();
        assert!(c.patients.iter().all(|p| p.labels.first_onset().is_none()));
    }

    #[test]
    fn event_fraction_within_binomial_bound() {
        let cfg = SynthConfig { n_patients: 1000, seed: 4, ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        let events = c.patients.iter().filter(|p| p.labels.first_onset().is_some()).count();
        // sd of the fraction is sqrt(.17 * .83 / 1000) ~ 0.0119; 0.03 is ~2.5 sd
        let frac = events as f64 / 1000.0;
        assert!((frac - 0.17).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn same_seed_same_csv() {
        let cfg = SynthConfig { n_patients: 30, seed: 99, ..Default::default() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_cohort(&cfg).unwrap().write_csv(&mut a).unwrap();
        generate_cohort(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_cohort(&SynthConfig { seed: 100, ..cfg }).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn onsets_fall_within_day_two_to_configured_end() {
        let cfg = SynthConfig { n_patients: 400, event_rate: 0.5, stay_hours: (30, 400), onset_day_range: (2, 14), seed: 1, ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        for p in &c.patients {
            if let Some(o) = p.labels.first_onset() {
                let hour = p.hour(o);
                assert!((24..=335).contains(&hour), "{hour}");
            }
        }
    }

    #[test]
    fn infeasible_onset_window_is_an_error() {
        let cfg = SynthConfig { stay_hours: (20, 30), onset_day_range: (2, 3), ..Default::default() };
        assert!(generate_cohort(&cfg).is_err());
    }

    #[test]
    fn row_count_is_sum_of_stays() {
        let cfg = SynthConfig { n_patients: 20, stay_hours: (40, 40), ..Default::default() };
        assert_eq!(generate_cohort(&cfg).unwrap().total_rows(), 800);
    }

    #[test]
    fn cases_change_more_before_onset_than_controls() {
        let cfg = SynthConfig { n_patients: 400, event_rate: 0.5, seed: 2, ..Default::default() };
        let c = generate_cohort(&cfg).unwrap();
        // mean |x[t] - x[t-6]| of the first vital, at onset for cases and at
        // the same hour index for controls
        let (mut case, mut ctrl) = (Vec::new(), Vec::new());
        for p in &c.patients {
            let t = p.labels.first_onset().unwrap_or(36);
            if t < 6 || t >= p.len() || !p.observed[t][0] || !p.observed[t - 6][0] {
                continue;
            }
            let d = (p.values[t][0] - p.values[t - 6][0]).abs();
            if p.labels.first_onset().is_some() { case.push(d) } else { ctrl.push(d) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(case.len() > 50 && ctrl.len() > 50);
        assert!(mean(&case) > mean(&ctrl), "{} vs {}", mean(&case), mean(&ctrl));
    }

    #[test]
    fn severity_shapes() {
        assert_eq!(severity(SignalMode::Progressive, 12, 0.5, 100, 88), 0.0);
        assert_eq!(severity(SignalMode::Progressive, 12, 0.5, 100, 94), 0.5);
        assert_eq!(severity(SignalMode::Progressive, 12, 0.5, 100, 100), 1.0);
        assert_eq!(severity(SignalMode::Sudden, 12, 0.5, 100, 94), 0.25);
        assert_eq!(severity(SignalMode::Sudden, 12, 0.0, 100, 97), 0.0);
        assert_eq!(severity(SignalMode::Sudden, 12, 0.5, 100, 98), 1.0);
    }
}
