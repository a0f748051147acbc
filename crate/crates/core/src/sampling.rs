//! Random over- and under-sampling of training rows.
//!
//! Only row multiplicities change; feature values are never touched. The
//! index-level functions are what the training pipeline uses so that
//! duplicated rows can be folded into integer sample weights.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureFrame;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Target minority count as a fraction of the majority count.
    pub oversample_ratio: f64,
    pub undersample_to_parity: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            oversample_ratio: 0.8,
            undersample_to_parity: true,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.oversample_ratio > 0.0 && self.oversample_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "oversample ratio {} outside (0, 1]",
                self.oversample_ratio
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

struct Classes {
    minority: Vec<usize>,
    majority: Vec<usize>,
}

fn split_classes(target: &[u8]) -> Result<Classes> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..target.len()).partition(|&i| target[i] == 1);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::single_class("resampling input"));
    }
    Ok(if pos.len() <= neg.len() {
        Classes {
            minority: pos,
            majority: neg,
        }
    } else {
        Classes {
            minority: neg,
            majority: pos,
        }
    })
}

/// All original indices followed by minority indices drawn with replacement
/// until the minority count reaches `round(ratio * majority)`.
pub fn oversample_indices<R: Rng>(target: &[u8], ratio: f64, rng: &mut R) -> Result<Vec<usize>> {
    let classes = split_classes(target)?;
    let goal = (ratio * classes.majority.len() as f64).round() as usize;
    let mut out: Vec<usize> = (0..target.len()).collect();
    let have = classes.minority.len();
    if have < goal {
        out.extend(
            (0..goal - have).map(|_| classes.minority[rng.random_range(0..have)]),
        );
    }
    Ok(out)
}

/// Positions (into `target`) that survive uniform majority subsampling down
/// to the minority count, in original order.
pub fn undersample_indices<R: Rng>(target: &[u8], rng: &mut R) -> Result<Vec<usize>> {
    let classes = split_classes(target)?;
    let keep = classes.minority.len();
    if classes.majority.len() == keep {
        return Ok((0..target.len()).collect());
    }
    let mut kept: Vec<usize> = index::sample(rng, classes.majority.len(), keep)
        .into_iter()
        .map(|k| classes.majority[k])
        .collect();
    kept.extend(&classes.minority);
    kept.sort_unstable();
    Ok(kept)
}

/// Oversampling followed (optionally) by undersampling, as source-row indices
/// into the original frame. Repeated indices are duplicates.
pub fn rebalance_indices(target: &[u8], cfg: &SamplerConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let over = oversample_indices(target, cfg.oversample_ratio, &mut seed::rng(seed::derive(cfg.seed, &[0])))?;
    if !cfg.undersample_to_parity {
        return Ok(over);
    }
    let over_target: Vec<u8> = over.iter().map(|&i| target[i]).collect();
    let kept = undersample_indices(&over_target, &mut seed::rng(seed::derive(cfg.seed, &[1])))?;
    Ok(kept.into_iter().map(|k| over[k]).collect())
}

/// Per-row multiplicities after [`rebalance_indices`].
pub fn rebalance_weights(target: &[u8], cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let mut w = vec![0.0; target.len()];
    for i in rebalance_indices(target, cfg)? {
        w[i] += 1.0;
    }
    Ok(w)
}

pub fn random_oversample(frame: &FeatureFrame, cfg: &SamplerConfig) -> Result<FeatureFrame> {
    cfg.validate()?;
    let idx = oversample_indices(
        &frame.target,
        cfg.oversample_ratio,
        &mut seed::rng(seed::derive(cfg.seed, &[0])),
    )?;
    Ok(frame.select_rows(&idx))
}

pub fn random_undersample(frame: &FeatureFrame, cfg: &SamplerConfig) -> Result<FeatureFrame> {
    let idx = undersample_indices(&frame.target, &mut seed::rng(seed::derive(cfg.seed, &[1])))?;
    Ok(frame.select_rows(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RowKey;
    use std::sync::Arc;

    fn frame(pos: usize, neg: usize) -> FeatureFrame {
        let n = pos + neg;
        let rows = (0..n)
            .map(|i| RowKey {
                patient_id: Arc::from(format!("p{i}").as_str()),
                hour: i as i64,
            })
            .collect();
        let target = (0..n).map(|i| u8::from(i < pos)).collect();
        let f = FeatureFrame::new(rows, vec!["x".into()], vec![(0..n).map(|i| i as f64 * 0.5).collect()], target).unwrap();
        assert_eq!(f.positives(), pos);
        f
    }

    fn counts(f: &FeatureFrame) -> (usize, usize) {
        (f.positives(), f.n_rows() - f.positives())
    }

    #[test]
    fn twenty_to_eight_hundred() {
        let f = frame(20, 1000);
        let cfg = SamplerConfig { seed: 3, ..Default::default() };
        let o = random_oversample(&f, &cfg).unwrap();
        assert_eq!(counts(&o), (800, 1000));
        let maj = |f: &FeatureFrame| -> Vec<(RowKey, u64)> {
            (0..f.n_rows()).filter(|&i| f.target[i] == 0).map(|i| (f.rows[i].clone(), f.columns[0][i].to_bits())).collect()
        };
        assert_eq!(maj(&o), maj(&f));
    }

    #[test]
    fn oversample_noop_when_target_met() {
        let f = frame(900, 1000);
        let o = random_oversample(&f, &SamplerConfig::default()).unwrap();
        assert_eq!(o, f);
    }

    #[test]
    fn undersample_to_parity() {
        let f = frame(800, 1000);
        let u = random_undersample(&f, &SamplerConfig::default()).unwrap();
        assert_eq!(counts(&u), (800, 800));
        let b = frame(10, 10);
        assert_eq!(random_undersample(&b, &SamplerConfig::default()).unwrap(), b);
    }

    #[test]
    fn same_seed_same_rows() {
        let f = frame(30, 500);
        let cfg = SamplerConfig { seed: 11, ..Default::default() };
        let a = random_undersample(&random_oversample(&f, &cfg).unwrap(), &cfg).unwrap();
        let b = random_undersample(&random_oversample(&f, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
        let idx = rebalance_indices(&f.target, &cfg).unwrap();
        let mut via_idx = f.select_rows(&idx).rows;
        let mut via_frames = a.rows;
        via_idx.sort();
        via_frames.sort();
        assert_eq!(via_idx, via_frames);
    }

    #[test]
    fn single_class_is_an_error() {
        let f = frame(0, 10);
        assert!(matches!(random_oversample(&f, &SamplerConfig::default()), Err(Error::SingleClass { .. })));
        assert!(random_undersample(&f, &SamplerConfig::default()).is_err());
    }

    #[test]
    fn ratio_validation() {
        let f = frame(2, 10);
        for r in [0.0, -1.0, 1.5, f64::NAN] {
            let cfg = SamplerConfig { oversample_ratio: r, ..Default::default() };
            assert!(random_oversample(&f, &cfg).is_err());
        }
    }
}
