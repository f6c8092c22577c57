//! Hand-crafted filter bank used by the fixed-feature model.
//!
//! The bank is a stand-in for intuitively chosen patterns (spikes, level
//! changes, trends). Every filter is normalised to unit L2 norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedFilter {
    /// Unit impulse at the centre sample.
    Impulse,
    /// `-1` on the first half, `+1` on the second half.
    Step,
    /// Linear ramp symmetric about the centre.
    Ramp,
    /// Constant (moving average).
    Boxcar,
    /// `x[c+1] - x[c]` at the centre.
    FirstDifference,
}

impl FixedFilter {
    pub const ALL: [FixedFilter; 5] = [
        FixedFilter::Impulse,
        FixedFilter::Step,
        FixedFilter::Ramp,
        FixedFilter::Boxcar,
        FixedFilter::FirstDifference,
    ];

    /// Unit-norm taps of length `d` (requires `d >= 4`).
    pub fn taps<S: Scalar>(self, d: usize) -> Result<Vec<S>> {
        if d < 4 {
            return Err(Error::invalid(format!("fixed filters need length >= 4, got {d}")));
        }
        // centre sample, matching the window convention (labelled time at (d-1)/2)
        let c = (d - 1) / 2;
        let mut v = vec![0.0f64; d];
        match self {
            FixedFilter::Impulse => v[c] = 1.0,
            FixedFilter::Step => {
                let half = d / 2;
                for (i, x) in v.iter_mut().enumerate() {
                    *x = if i < half {
                        -1.0
                    } else if d % 2 == 1 && i == half {
                        0.0
                    } else {
                        1.0
                    };
                }
            }
            FixedFilter::Ramp => {
                let mid = (d as f64 - 1.0) / 2.0;
                for (i, x) in v.iter_mut().enumerate() {
                    *x = i as f64 - mid;
                }
            }
            FixedFilter::Boxcar => v.iter_mut().for_each(|x| *x = 1.0),
            FixedFilter::FirstDifference => {
                v[c] = -1.0;
                v[c + 1] = 1.0;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(v.into_iter().map(|x| S::of(x / n)).collect())
    }
}

/// The default `K = 5` bank at filter length `d`, in [`FixedFilter::ALL`] order.
pub fn fixed_filter_bank<S: Scalar>(d: usize) -> Result<Vec<Vec<S>>> {
    bank_of(&FixedFilter::ALL, d)
}

pub fn bank_of<S: Scalar>(filters: &[FixedFilter], d: usize) -> Result<Vec<Vec<S>>> {
    filters.iter().map(|f| f.taps(d)).collect()
}
