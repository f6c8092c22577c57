use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(FPR, TPR)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Threshold for each point (`p >= threshold` is positive); infinite for the origin.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps the threshold over every distinct score, highest first.
pub fn roc_curve(probs: &[f64], labels: &[Label]) -> Result<Roc> {
    if probs.len() != labels.len() {
        return Err(Error::shape("roc_curve", "labels", probs.len(), labels.len()));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    let npos = labels.iter().filter(|l| **l == Label::Positive).count();
    let nneg = labels.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(Error::invalid("roc curve needs both classes"));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let th = probs[order[i]];
        while i < order.len() && probs[order[i]] == th {
            match labels[order[i]] {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / nneg as f64, tp as f64 / npos as f64));
        thresholds.push(th);
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(Roc {
        points,
        thresholds,
        auc,
    })
}
