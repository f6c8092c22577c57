//! Per-feature-map batch normalisation over the batch and length axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Running estimates used in [`Mode::Eval`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<S> {
    pub mean: Tensor<S>,
    pub var: Tensor<S>,
    /// Number of Train-mode updates folded in so far.
    pub updates: u64,
}

impl<S: Scalar> RunningStats<S> {
    pub fn init(maps: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[maps]),
            var: Tensor::full(&[maps], S::one()),
            updates: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<S> {
    xhat: Tensor<S>,
    inv_std: Vec<S>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNormOutput<S> {
    pub y: Tensor<S>,
    pub cache: BatchNormCache<S>,
    /// New running statistics (Train mode only).
    pub running: Option<RunningStats<S>>,
    /// Set when Eval mode runs on never-updated statistics.
    pub warning: Option<String>,
}

pub struct BatchNormGrads<S> {
    pub x: Tensor<S>,
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
}

fn dims(x: &Tensor<impl Scalar>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, p, l] => Ok((*b, *p, *l)),
        _ => Err(Error::shape("batchnorm", "input rank", 3, x.rank())),
    }
}

/// Normalises `x: [B x P x L]` per map, then applies `gamma * xhat + beta`.
///
/// Train mode uses the batch statistics and returns updated running stats
/// (momentum-weighted, unbiased variance); Eval mode uses `running`.
pub fn batchnorm_forward<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running: &RunningStats<S>,
    mode: Mode,
) -> Result<BatchNormOutput<S>> {
    let (b, p, l) = dims(x)?;
    if gamma.len() != p || beta.len() != p {
        return Err(Error::shape("batchnorm", "scale/shift maps", p, gamma.len().min(beta.len())));
    }
    if running.mean.len() != p || running.var.len() != p {
        return Err(Error::shape("batchnorm", "running stats maps", p, running.mean.len()));
    }
    let eps = S::of(BN_EPS);
    let n = b * l;
    let xd = x.data();
    let mut mean = vec![S::zero(); p];
    let mut var = vec![S::zero(); p];
    let mut warning = None;
    match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::invalid("batchnorm Train mode needs at least two values per map"));
            }
            for s in 0..b {
                for c in 0..p {
                    mean[c] += x.row(&[s, c]).iter().copied().sum::<S>();
                }
            }
            let nn = S::of(n as f64);
            mean.iter_mut().for_each(|m| *m /= nn);
            for s in 0..b {
                for c in 0..p {
                    let m = mean[c];
                    var[c] += x.row(&[s, c]).iter().map(|&v| (v - m) * (v - m)).sum::<S>();
                }
            }
            var.iter_mut().for_each(|v| *v /= nn);
        }
        Mode::Eval => {
            if running.updates == 0 {
                warning = Some("batchnorm evaluated before any Train step; using initial statistics".into());
            }
            mean.copy_from_slice(running.mean.data());
            var.copy_from_slice(running.var.data());
        }
    }
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

    let mut xhat = vec![S::zero(); xd.len()];
    let mut y = vec![S::zero(); xd.len()];
    for s in 0..b {
        for c in 0..p {
            let off = (s * p + c) * l;
            for t in off..off + l {
                let h = (xd[t] - mean[c]) * inv_std[c];
                xhat[t] = h;
                y[t] = gamma.data()[c] * h + beta.data()[c];
            }
        }
    }

    let new_running = (mode == Mode::Train).then(|| {
        let mom = S::of(BN_MOMENTUM);
        let unbias = S::of(n as f64 / (n as f64 - 1.0));
        let m: Vec<S> = running
            .mean
            .data()
            .iter()
            .zip(&mean)
            .map(|(&r, &bm)| (S::one() - mom) * r + mom * bm)
            .collect();
        let v: Vec<S> = running
            .var
            .data()
            .iter()
            .zip(&var)
            .map(|(&r, &bv)| (S::one() - mom) * r + mom * bv * unbias)
            .collect();
        RunningStats {
            mean: Tensor::from_parts(vec![p], m),
            var: Tensor::from_parts(vec![p], v),
            updates: running.updates + 1,
        }
    });

    Ok(BatchNormOutput {
        y: Tensor::from_parts(x.shape().to_vec(), y),
        cache: BatchNormCache {
            xhat: Tensor::from_parts(x.shape().to_vec(), xhat),
            inv_std,
            mode,
        },
        running: new_running,
        warning,
    })
}

pub fn batchnorm_vjp<S: Scalar>(
    cache: &BatchNormCache<S>,
    gamma: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<BatchNormGrads<S>> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Cache {
            op: "batchnorm_vjp",
            detail: format!("grad_out {:?} vs forward {:?}", grad_out.shape(), cache.xhat.shape()),
        });
    }
    let (b, p, l) = dims(grad_out)?;
    if gamma.len() != p {
        return Err(Error::Cache {
            op: "batchnorm_vjp",
            detail: format!("gamma has {} maps, forward had {p}", gamma.len()),
        });
    }
    let g = grad_out.data();
    let h = cache.xhat.data();
    let mut dgamma = vec![S::zero(); p];
    let mut dbeta = vec![S::zero(); p];
    for s in 0..b {
        for c in 0..p {
            let off = (s * p + c) * l;
            for t in off..off + l {
                dgamma[c] += g[t] * h[t];
                dbeta[c] += g[t];
            }
        }
    }
    let mut dx = vec![S::zero(); g.len()];
    let nn = S::of((b * l) as f64);
    for s in 0..b {
        for c in 0..p {
            let off = (s * p + c) * l;
            let k = gamma.data()[c] * cache.inv_std[c];
            for t in off..off + l {
                dx[t] = match cache.mode {
                    // d xhat = g * gamma; dx = inv_std/N * (N*dxhat - sum dxhat - xhat * sum(dxhat*xhat))
                    Mode::Train => k * (g[t] - dbeta[c] / nn - h[t] * dgamma[c] / nn),
                    Mode::Eval => k * g[t],
                };
            }
        }
    }
    Ok(BatchNormGrads {
        x: Tensor::from_parts(grad_out.shape().to_vec(), dx),
        gamma: Tensor::from_parts(vec![p], dgamma),
        beta: Tensor::from_parts(vec![p], dbeta),
    })
}
