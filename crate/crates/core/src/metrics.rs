//! Ranking metrics.

use alloc::vec::Vec;

use crate::ndcore::Real;
use crate::{Error, Result};

/// ROC AUC: the probability that a uniformly drawn positive scores above a
/// uniformly drawn negative, with ties counted as one half.
///
/// Sorts once and sweeps tie groups, accumulating twice the Mann-Whitney U
/// statistic as an integer, so the result is exact up to the final division.
pub fn eval_auc<T: Real>(predictions: &[T], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "eval_auc",
            left: alloc::vec![predictions.len()],
            right: alloc::vec![labels.len()],
        });
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    if predictions.iter().any(|p| p.is_nan()) {
        return Err(Error::Invalid("NaN prediction".into()));
    }

    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].as_f64().total_cmp(&predictions[b].as_f64()));

    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = predictions[order[i]].as_f64();
        let (mut p, mut q) = (0u128, 0u128);
        let mut j = i;
        while j < order.len() && predictions[order[j]].as_f64() == score {
            if labels[order[j]] != 0 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_u += 2 * p * negatives_below + p * q;
        negatives_below += q;
        i = j;
    }
    Ok(twice_u as f64 / (2 * positives as u128 * negatives as u128) as f64)
}
