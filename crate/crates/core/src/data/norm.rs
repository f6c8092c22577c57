use serde::{Deserialize, Serialize};

use super::store::ChannelStore;
use super::TimeRange;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Standard deviations below this are replaced by 1.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Per-channel training mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub floor: f64,
    /// Range the statistics were computed over.
    pub range: TimeRange,
}

impl NormStats {
    /// `(x - mean_p) / std_p`.
    pub fn normalise<S: Scalar>(&self, p: usize, x: S) -> S {
        S::of((x.f64() - self.mean[p]) / self.std[p])
    }

    /// Normalises a `[P x len]` window in place.
    pub fn normalise_window<S: Scalar>(&self, window: &mut [S], len: usize) {
        for (p, row) in window.chunks_exact_mut(len).enumerate() {
            let (m, s) = (self.mean[p], self.std[p]);
            row.iter_mut().for_each(|v| *v = S::of((v.f64() - m) / s));
        }
    }
}

pub fn compute_norm_stats<S: Scalar>(store: &ChannelStore<S>, train_range: TimeRange) -> Result<NormStats> {
    let idx = store.index_range(train_range.start, train_range.end);
    if idx.is_empty() {
        return Err(Error::invalid(format!(
            "training range [{}, {}) contains no samples",
            train_range.start, train_range.end
        )));
    }
    let n = idx.len() as f64;
    let mut mean = Vec::with_capacity(store.n_channels());
    let mut std = Vec::with_capacity(store.n_channels());
    for p in 0..store.n_channels() {
        let xs = &store.channel(p)[idx.clone()];
        let m = xs.iter().map(|v| v.f64()).sum::<f64>() / n;
        let var = xs.iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>() / n;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s < SIGMA_FLOOR { 1.0 } else { s });
    }
    Ok(NormStats {
        mean,
        std,
        floor: SIGMA_FLOOR,
        range: train_range,
    })
}

pub fn apply_norm<S: Scalar>(store: &ChannelStore<S>, stats: &NormStats) -> Result<ChannelStore<S>> {
    if stats.mean.len() != store.n_channels() {
        return Err(Error::shape("apply_norm", "channels", store.n_channels(), stats.mean.len()));
    }
    let mut out = store.clone();
    for p in 0..store.n_channels() {
        out.channel_mut(p).iter_mut().for_each(|v| *v = stats.normalise(p, *v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        // channel [1, 3] in the training range, then a validation sample 5
        let store = ChannelStore::<f64>::new(1.0, 0, 1, vec![1.0, 3.0, 5.0]).unwrap();
        let st = compute_norm_stats(&store, TimeRange::new(0.0, 2.0).unwrap()).unwrap();
        assert_eq!((st.mean[0], st.std[0]), (2.0, 1.0));
        let out = apply_norm(&store, &st).unwrap();
        assert_eq!(out.channel(0), &[-1.0, 1.0, 3.0]);
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let store = ChannelStore::<f64>::new(1.0, 0, 1, vec![7.0; 6]).unwrap();
        let st = compute_norm_stats(&store, TimeRange::new(0.0, 4.0).unwrap()).unwrap();
        assert_eq!(st.std[0], 1.0);
        assert!(apply_norm(&store, &st).unwrap().channel(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_range_rejected() {
        let store = ChannelStore::<f64>::new(1.0, 0, 1, vec![1.0; 4]).unwrap();
        assert!(compute_norm_stats(&store, TimeRange::new(10.0, 20.0).unwrap()).is_err());
    }
}
