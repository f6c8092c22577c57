use serde::{Deserialize, Serialize};

use super::activation::{sigmoid, softplus};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary class label; `Positive` is a glitch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(y: i8) -> Result<Self> {
        match y {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            _ => Err(Error::invalid(format!("label must be -1 or +1, got {y}"))),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    /// `(y + 1) / 2`.
    pub fn target<S: Scalar>(self) -> S {
        match self {
            Label::Positive => S::one(),
            Label::Negative => S::zero(),
        }
    }
}

/// Binary cross-entropy of logit `z`: `softplus(z) - tau * z`.
#[inline]
pub fn bce_loss<S: Scalar>(z: S, y: Label) -> S {
    softplus(z) - y.target::<S>() * z
}

/// Derivative of [`bce_loss`] with respect to the logit.
#[inline]
pub fn bce_grad<S: Scalar>(z: S, y: Label) -> S {
    sigmoid(z) - y.target::<S>()
}

/// Mean loss over a batch and per-logit gradients of that mean.
pub fn bce_mean<S: Scalar>(logits: &[S], labels: &[Label]) -> Result<(S, Vec<S>)> {
    if logits.len() != labels.len() {
        return Err(Error::shape("bce_mean", "labels", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(Error::invalid("bce_mean of an empty batch"));
    }
    let n = S::of(logits.len() as f64);
    let loss = logits.iter().zip(labels).map(|(&z, &y)| bce_loss(z, y)).sum::<S>() / n;
    let grads = logits.iter().zip(labels).map(|(&z, &y)| bce_grad(z, y) / n).collect();
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((bce_loss(0.0f64, Label::Positive) - 0.693_147_180_559_945_3).abs() < 1e-12);
        assert!(bce_loss(800.0f64, Label::Positive).abs() < 1e-300);
        assert!((bce_loss(1.0f64, Label::Negative) - 1.313_262).abs() < 1e-6);
        assert!((bce_grad(1.0f64, Label::Negative) - sigmoid(1.0)).abs() < 1e-15);
        assert!(bce_loss(-800.0f64, Label::Positive).is_finite());
    }

    #[test]
    fn label_signs() {
        assert_eq!(Label::from_sign(1).unwrap(), Label::Positive);
        assert_eq!(Label::from_sign(-1).unwrap().sign(), -1);
        assert!(Label::from_sign(0).is_err());
    }
}
