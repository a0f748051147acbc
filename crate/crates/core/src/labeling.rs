//! Horizon-shifted targets and cohort filtering rules.

use serde::{Deserialize, Serialize};

use crate::cohort::PatientSeries;
use crate::error::{Error, Result};

/// Ground-truth onset indicators per hour, plus the horizon-shifted target
/// once [`shift_labels`] has been applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub onset: Vec<u8>,
    pub horizon: Option<usize>,
    pub shifted: Option<Vec<u8>>,
}

impl LabelTrack {
    pub fn new(onset: Vec<u8>) -> Self {
        Self {
            onset,
            horizon: None,
            shifted: None,
        }
    }

    pub fn first_onset(&self) -> Option<usize> {
        self.onset.iter().position(|&y| y == 1)
    }
}

/// Moves every label `h` hours earlier: `shifted[i] = onset[i + h]`. The last
/// `h` rows have no target and are dropped from the shifted sequence.
pub fn shift_labels(track: &LabelTrack, h: usize) -> Result<LabelTrack> {
    let len = track.onset.len();
    if h >= len {
        return Err(Error::EmptyShift { horizon: h, len });
    }
    Ok(LabelTrack {
        onset: track.onset.clone(),
        horizon: Some(h),
        shifted: Some(track.onset[h..].to_vec()),
    })
}

/// Drops every row after the first onset. The onset row itself is kept.
pub fn truncate_after_onset(series: &PatientSeries) -> PatientSeries {
    match series.labels.first_onset() {
        Some(t0) if t0 + 1 < series.len() => series.slice_rows(0..t0 + 1),
        _ => series.clone(),
    }
}

/// First hour of day `day` (day 1 covers hours 0-23).
pub fn day_start_hour(day: u32) -> i64 {
    24 * (i64::from(day) - 1)
}

/// Keeps rows whose hour lies in `[24 (start_day - 1), 24 end_day - 1]`.
///
/// Returns `Ok(None)` when no row remains, meaning the patient is excluded.
pub fn clip_to_day_range(
    series: &PatientSeries,
    start_day: u32,
    end_day: u32,
) -> Result<Option<PatientSeries>> {
    if start_day < 1 || end_day < start_day {
        return Err(Error::Config(format!(
            "invalid day range {start_day}..={end_day}"
        )));
    }
    let lo = day_start_hour(start_day).max(series.start_hour);
    let hi = (day_start_hour(end_day) + 23).min(series.end_hour());
    if series.is_empty() || lo > hi {
        return Ok(None);
    }
    let first = (lo - series.start_hour) as usize;
    let last = (hi - series.start_hour) as usize;
    Ok(Some(series.slice_rows(first..last + 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(start_hour: i64, onset: Vec<u8>) -> PatientSeries {
        let t = onset.len();
        PatientSeries {
            patient_id: "p".into(),
            start_hour,
            values: (0..t).map(|i| vec![i as f64]).collect(),
            observed: vec![vec![true]; t],
            labels: LabelTrack::new(onset),
        }
    }

    #[test]
    fn shift_by_three_matches_worked_example() {
        let t = LabelTrack::new(vec![0, 0, 0, 0, 1, 1]);
        let s = shift_labels(&t, 3).unwrap();
        assert_eq!(s.shifted.as_deref(), Some(&[0, 1, 1][..]));
        assert_eq!(s.horizon, Some(3));
    }

    #[test]
    fn zero_shift_is_identity() {
        let t = LabelTrack::new(vec![0, 1]);
        assert_eq!(shift_labels(&t, 0).unwrap().shifted.unwrap(), vec![0, 1]);
    }

    #[test]
    fn shift_past_end_is_empty_result() {
        let t = LabelTrack::new(vec![0, 1]);
        assert!(matches!(
            shift_labels(&t, 2),
            Err(Error::EmptyShift { horizon: 2, len: 2 })
        ));
    }

    #[test]
    fn truncation_keeps_first_onset_row() {
        // onset at 4:00, records continue to 7:00
        let s = series(0, vec![0, 0, 0, 0, 1, 1, 1, 0]);
        let t = truncate_after_onset(&s);
        assert_eq!(t.end_hour(), 4);
        assert_eq!(t.labels.onset, vec![0, 0, 0, 0, 1]);
        assert_eq!(t.values.last().unwrap(), &vec![4.0]);
    }

    #[test]
    fn truncation_noops() {
        let none = series(0, vec![0, 0, 0]);
        assert_eq!(truncate_after_onset(&none), none);
        let last = series(0, vec![0, 0, 1]);
        assert_eq!(truncate_after_onset(&last), last);
    }

    #[test]
    fn clip_day_two_to_fourteen() {
        let s = series(0, vec![0; 401]);
        let c = clip_to_day_range(&s, 2, 14).unwrap().unwrap();
        // day 2 starts at hour 24; day 14 ends at hour 24*14-1
        assert_eq!(c.start_hour, 24);
        assert_eq!(c.end_hour(), 24 * 14 - 1);
        assert_eq!(c.end_hour(), 335);
        assert_eq!(c.len(), 335 - 24 + 1);
        assert_eq!(c.values[0], vec![24.0]);
    }

    #[test]
    fn clip_identity_and_exclusion() {
        let s = series(0, vec![0; 50]);
        assert_eq!(clip_to_day_range(&s, 1, 14).unwrap().unwrap(), s);
        let short = series(0, vec![0; 21]);
        assert!(clip_to_day_range(&short, 2, 14).unwrap().is_none());
        assert!(clip_to_day_range(&s, 0, 3).is_err());
        assert!(clip_to_day_range(&s, 3, 2).is_err());
    }
}
