//! LogLoss and AUC.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{sigmoid, DenseScratch, Model};

/// Probabilities are clipped to `[CLIP, 1 − CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub logloss: f64,
    pub auc: f64,
    pub n_samples: usize,
}

/// Anything that maps a sample to a logit with reusable scratch space.
pub trait Scorer {
    type Scratch;

    fn scratch(&self) -> Self::Scratch;

    fn logit_with(&self, sample: &Sample, scratch: &mut Self::Scratch) -> Result<f64>;
}

impl Scorer for Model {
    type Scratch = DenseScratch;

    fn scratch(&self) -> DenseScratch {
        DenseScratch::new(&self.config)
    }

    fn logit_with(&self, sample: &Sample, scratch: &mut DenseScratch) -> Result<f64> {
        Model::logit_with(self, sample, scratch)
    }
}

pub fn eval_logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::UndefinedMetric("logloss of an empty set".into()));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mann–Whitney AUC via sort-and-rank; tied scores share their average rank,
/// which credits each tied positive–negative pair with ½.
pub fn eval_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are doubled so tie averages stay integral.
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_avg = (i + 1 + j) as u64;
        let pos_in_group = order[i..j].iter().filter(|&&o| labels[o] == 1).count() as u64;
        doubled_rank_sum += doubled_avg * pos_in_group;
        i = j;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Score every sample and compute both metrics.
pub fn evaluate<S: Scorer>(scorer: &S, samples: &[Sample]) -> Result<EvalResult> {
    let mut scratch = scorer.scratch();
    let mut probs = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        probs.push(sigmoid(scorer.logit_with(s, &mut scratch)?));
        labels.push(s.label);
    }
    Ok(EvalResult {
        logloss: eval_logloss(&probs, &labels)?,
        auc: eval_auc(&probs, &labels)?,
        n_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut doubled = 0u64;
        let mut pairs = 0u64;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    doubled += 2;
                } else if scores[i] == scores[j] {
                    doubled += 1;
                }
            }
        }
        doubled as f64 / (2 * pairs) as f64
    }

    #[test]
    fn logloss_cases() {
        assert!((eval_logloss(&[0.5, 0.5], &[1, 0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let confident = eval_logloss(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!((confident - 1.0000000494736474e-7).abs() < 1e-15, "{confident}");
        let v = eval_logloss(&[0.9, 0.2], &[1, 0]).unwrap();
        assert!((v - (-(0.9f64).ln() - (0.8f64).ln()) / 2.0).abs() < 1e-15);
        assert!((v - 0.164252033486018).abs() < 1e-9);
        assert!(eval_logloss(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(eval_auc(&[0.1, 0.2, 0.9], &[0, 0, 1]).unwrap(), 1.0);
        assert_eq!(eval_auc(&[0.3; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(eval_auc(&[0.8, 0.6, 0.4], &[1, 0, 1]).unwrap(), 0.5);
        assert!(matches!(eval_auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(
            data in proptest::collection::vec((0u8..12, 0u8..2), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 4.0).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, y)| y).collect();
            let both = labels.contains(&0) && labels.contains(&1);
            prop_assume!(both);
            prop_assert_eq!(eval_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_monotone_maps(
            data in proptest::collection::vec((-5.0f64..5.0, 0u8..2), 2..100)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, y)| y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let mapped: Vec<f64> = scores.iter().map(|&s| sigmoid(3.0 * s) ).collect();
            let cubed: Vec<f64> = scores.iter().map(|&s| s * s * s + 2.0 * s).collect();
            let base = eval_auc(&scores, &labels).unwrap();
            prop_assert_eq!(base, eval_auc(&cubed, &labels).unwrap());
            // sigmoid can merge distinct scores into ties near saturation only
            // beyond |3s| ≈ 37, outside this range.
            prop_assert_eq!(base, eval_auc(&mapped, &labels).unwrap());
        }
    }
}
