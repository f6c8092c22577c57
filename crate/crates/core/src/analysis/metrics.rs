use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{bce_loss, sigmoid, Label};

/// Binary classification summary at threshold `p >= 0.5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean binary cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    /// `TP / (TP + FN)`, or 0 without positives.
    pub tpr: f64,
    /// `TN / (TN + FP)`, or 0 without negatives.
    pub tnr: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn tally(probs: &[f64], labels: &[Label], loss: f64) -> Metrics {
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= 0.5, y) {
            (true, Label::Positive) => tp += 1,
            (false, Label::Negative) => tn += 1,
            (true, Label::Negative) => fp += 1,
            (false, Label::Positive) => fn_ += 1,
        }
    }
    Metrics {
        loss,
        accuracy: ratio(tp + tn, probs.len()),
        tpr: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        tp,
        tn,
        fp,
        fn_,
    }
}

fn check(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::shape("compute_metrics", "labels", n, m));
    }
    if n == 0 {
        return Err(Error::invalid("metrics of an empty set"));
    }
    Ok(())
}

/// Metrics from probabilities; the loss clamps `p` away from 0 and 1.
pub fn compute_metrics(probs: &[f64], labels: &[Label]) -> Result<Metrics> {
    check(probs.len(), labels.len())?;
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    let loss = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| match y {
            Label::Positive => -p.max(f64::MIN_POSITIVE).ln(),
            Label::Negative => -(-p).ln_1p().max(f64::MIN_POSITIVE.ln()),
        })
        .sum::<f64>()
        / probs.len() as f64;
    Ok(tally(probs, labels, loss))
}

/// Metrics from logits, with the loss evaluated stably in logit space.
pub fn compute_metrics_from_logits(logits: &[f64], labels: &[Label]) -> Result<Metrics> {
    check(logits.len(), labels.len())?;
    let loss = logits.iter().zip(labels).map(|(&z, &y)| bce_loss(z, y)).sum::<f64>() / logits.len() as f64;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(tally(&probs, labels, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn hand_count() {
        let m = compute_metrics(&[0.9, 0.2, 0.6, 0.4], &[P, N, N, P]).unwrap();
        assert_eq!((m.accuracy, m.tpr, m.tnr), (0.5, 0.5, 0.5));
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (1, 1, 1, 1));
    }

    #[test]
    fn coin_flip() {
        let m = compute_metrics(&[0.5; 4], &[P, N, P, N]).unwrap();
        assert!((m.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.5);
        let z = compute_metrics_from_logits(&[0.0; 4], &[P, N, P, N]).unwrap();
        assert_eq!(z.loss, std::f64::consts::LN_2);
    }

    #[test]
    fn perfect_and_empty() {
        let m = compute_metrics(&[1.0, 0.0], &[P, N]).unwrap();
        assert_eq!((m.accuracy, m.tpr, m.tnr), (1.0, 1.0, 1.0));
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[0.1], &[]).is_err());
    }
}
