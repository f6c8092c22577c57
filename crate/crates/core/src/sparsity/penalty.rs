use serde::{Deserialize, Serialize};

use super::groups::GroupView;
use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::scalar::Scalar;

/// `(lambda/2) * sum eta^2 + alpha * sum |eta|`.
pub fn elastic_net_penalty<S: Scalar>(eta: &[S], lambda: S, alpha: S) -> Result<S> {
    if !(lambda >= S::zero()) || !(alpha >= S::zero()) {
        return Err(Error::invalid(format!(
            "elastic net strengths must be non-negative (lambda={lambda}, alpha={alpha})"
        )));
    }
    let sq: S = eta.iter().map(|&e| e * e).sum();
    let l1: S = eta.iter().map(|&e| e.abs()).sum();
    Ok(lambda / S::of(2.0) * sq + alpha * l1)
}

/// Proximal operator of `tau * ||.||_2`: `w * max(0, 1 - tau/||w||)`.
///
/// Returns the exact zero vector when `||w|| <= tau`.
pub fn group_soft_threshold<S: Scalar>(w: &[S], tau: S) -> Vec<S> {
    let n = w.iter().map(|&v| v * v).sum::<S>().sqrt();
    if n <= tau {
        return vec![S::zero(); w.len()];
    }
    let k = S::one() - tau / n;
    w.iter().map(|&v| v * k).collect()
}

/// Accumulated L1 penalty, per group, for the cumulative update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativePenaltyState {
    /// Penalty actually applied to each group so far.
    pub applied: Vec<f64>,
    /// Total penalty each weight could have received: `alpha * sum(lr)`.
    pub total: f64,
}

impl CumulativePenaltyState {
    pub fn new(groups: usize) -> Self {
        CumulativePenaltyState {
            applied: vec![0.0; groups],
            total: 0.0,
        }
    }
}

/// Cumulative group-L1 step, run once per optimiser step after the gradient update.
///
/// Adds `alpha * lr` to the total; each group whose outstanding penalty
/// `total - applied_g` is positive is shrunk radially by
/// `min(||w_g||, total - applied_g)`, and that amount is added to `applied_g`.
pub fn cumulative_l1_update<S: Scalar>(
    params: &mut ModelParams<S>,
    groups: &GroupView,
    state: &mut CumulativePenaltyState,
    alpha: f64,
    lr: f64,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate must be non-negative, got {lr}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    if state.applied.len() != groups.len() {
        return Err(Error::shape("cumulative_l1_update", "penalty state groups", groups.len(), state.applied.len()));
    }
    if alpha == 0.0 {
        return Ok(());
    }
    state.total += alpha * lr;
    let w = params.layer0_weight_mut();
    if w.len() != groups.total {
        return Err(Error::shape("cumulative_l1_update", "layer-0 weights", groups.total, w.len()));
    }
    let data = w.data_mut();
    for (g, q) in groups.groups.iter().zip(state.applied.iter_mut()) {
        let outstanding = state.total - *q;
        if outstanding <= 0.0 {
            continue;
        }
        let norm = g.norm(data).f64();
        if norm == 0.0 {
            continue;
        }
        let applied = norm.min(outstanding);
        if applied >= norm {
            g.indices().for_each(|i| data[i] = S::zero());
        } else {
            let k = S::of(1.0 - applied / norm);
            g.indices().for_each(|i| data[i] *= k);
        }
        *q += applied;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, ArchitectureSpec, ModelKind};
    use crate::sparsity::channel_norms;

    #[test]
    fn penalty_examples() {
        assert_eq!(elastic_net_penalty(&[0.0f64, 0.0], 0.3, 0.7).unwrap(), 0.0);
        let v = elastic_net_penalty(&[3.0f64, 4.0], 0.1, 0.2).unwrap();
        assert!((v - 2.65).abs() < 1e-12);
        assert_eq!(elastic_net_penalty(&[1.0f64, 2.0], 2.0, 0.0).unwrap(), 5.0);
        assert!(elastic_net_penalty(&[1.0f64], -1.0, 0.0).is_err());
        assert!(elastic_net_penalty(&[1.0f64], 0.0, -1.0).is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        let w = [3.0f64, 4.0];
        let out = group_soft_threshold(&w, 2.0);
        assert!((out[0] - 1.8).abs() < 1e-12 && (out[1] - 2.4).abs() < 1e-12);
        let out = group_soft_threshold(&w, 5.0);
        assert!(out.iter().all(|v| v.to_bits() == 0));
        let out = group_soft_threshold(&w, 7.0);
        assert!(out.iter().all(|v| v.to_bits() == 0));
        assert_eq!(group_soft_threshold(&w, 0.0), w.to_vec());
    }

    fn lf(p: usize, t: usize) -> (ModelParams<f64>, GroupView) {
        let spec = ArchitectureSpec::new(ModelKind::LF, p, t);
        (build(&spec, 9).unwrap(), GroupView::for_spec(&spec).unwrap())
    }

    #[test]
    fn zero_alpha_is_a_no_op() {
        let (mut params, groups) = lf(3, 4);
        let before = params.clone();
        let mut st = CumulativePenaltyState::new(groups.len());
        cumulative_l1_update(&mut params, &groups, &mut st, 0.0, 0.1).unwrap();
        assert_eq!(params, before);
        assert_eq!(st, CumulativePenaltyState::new(groups.len()));
    }

    #[test]
    fn first_step_matches_prox() {
        let (mut params, groups) = lf(1, 5);
        let w0 = params.layer0_weight().data().to_vec();
        let mut st = CumulativePenaltyState::new(1);
        cumulative_l1_update(&mut params, &groups, &mut st, 0.5, 0.01).unwrap();
        let expect = group_soft_threshold(&w0, 0.005);
        assert_eq!(params.layer0_weight().data(), expect.as_slice());
    }

    #[test]
    fn negative_lr_rejected() {
        let (mut params, groups) = lf(2, 3);
        let mut st = CumulativePenaltyState::new(2);
        assert!(cumulative_l1_update(&mut params, &groups, &mut st, 0.1, -1.0).is_err());
    }

    #[test]
    fn zeroed_group_stays_zero() {
        let (mut params, groups) = lf(2, 4);
        let mut st = CumulativePenaltyState::new(2);
        let (alpha, lr) = (0.2, 0.1);
        let eta0 = channel_norms(&params, &groups);
        let steps: Vec<usize> = eta0.iter().map(|e| (e / (alpha * lr)).ceil() as usize).collect();
        let mut zeroed_at = vec![None; 2];
        for step in 1..=steps.iter().max().unwrap() + 10 {
            cumulative_l1_update(&mut params, &groups, &mut st, alpha, lr).unwrap();
            for (g, eta) in channel_norms(&params, &groups).into_iter().enumerate() {
                if let Some(k) = zeroed_at[g] {
                    assert_eq!(eta, 0.0, "group {g} revived after zeroing at {k}");
                } else if eta == 0.0 {
                    zeroed_at[g] = Some(step);
                }
            }
        }
        for g in 0..2 {
            assert!(zeroed_at[g].unwrap() <= steps[g]);
        }
    }
}
