//! Forward and backward passes over an architecture's layer table.

use super::bank::bank_of;
use super::params::{LayerParams, ModelParams};
use super::spec::{ArchitectureSpec, LayerDef, ModelKind};
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_forward, batchnorm_vjp, correlate, correlate_vjp_with, linear_forward, linear_vjp, maxpool, maxpool_vjp,
    relu, relu_vjp, sigmoid, LayerCache, Mode, RunningStats,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Samples per chunk when evaluating large sets without gradients.
pub const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug)]
enum Saved<S> {
    Layer(LayerCache<S>),
    Flatten { shape: Vec<usize> },
    /// Fixed-bank responses `[B x K x P]` at the window centre.
    Features { phi: Tensor<S> },
    /// Batchnorm applied to a `[B x m]` activation.
    BatchNormFlat(LayerCache<S>),
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Caches<S> {
    kind: ModelKind,
    batch: usize,
    saved: Vec<Saved<S>>,
}

impl<S> Caches<S> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug)]
pub struct ForwardPass<S> {
    pub logits: Vec<S>,
    pub probs: Vec<S>,
    pub caches: Caches<S>,
    /// New batchnorm running statistics keyed by parameter-layer index (Train mode).
    pub bn_updates: Vec<(usize, RunningStats<S>)>,
    pub warnings: Vec<String>,
}

fn check_batch<S: Scalar>(spec: &ArchitectureSpec, batch: &Tensor<S>) -> Result<usize> {
    spec.validate()?;
    match batch.shape() {
        [b, p, t] => {
            if *p != spec.n_channels {
                return Err(Error::shape("forward", "channels", spec.n_channels, *p));
            }
            if *t != spec.input_len {
                return Err(Error::shape("forward", "input length", spec.input_len, *t));
            }
            Ok(*b)
        }
        _ => Err(Error::shape("forward", "batch rank", 3, batch.rank())),
    }
}

/// Index of the output that aligns a filter of length `d` with the labelled
/// time of a window of length `t`.
pub fn centre_offset(t: usize, d: usize) -> usize {
    (t - 1) / 2 - (d - 1) / 2
}

/// Runs the network on `batch: [B x P x T]`.
pub fn forward<S: Scalar>(
    spec: &ArchitectureSpec,
    params: &ModelParams<S>,
    batch: &Tensor<S>,
    mode: Mode,
) -> Result<ForwardPass<S>> {
    let bsz = check_batch(spec, batch)?;
    let defs = spec.layers();
    let mut act = batch.clone();
    let mut saved = Vec::with_capacity(defs.len());
    let mut bn_updates = Vec::new();
    let mut warnings = Vec::new();
    let mut pi = 0usize;
    for def in &defs {
        match *def {
            LayerDef::FixedCombination { len, .. } => {
                let LayerParams::Combination { omega, b } = &params.layers[pi] else {
                    return Err(param_mismatch(pi, "combination"));
                };
                let bank: Vec<Vec<S>> = bank_of(&spec.fixed_bank, len)?;
                let k = bank.len();
                let p = spec.n_channels;
                let c = centre_offset(spec.input_len, len);
                let mut phi = vec![S::zero(); bsz * k * p];
                let mut logits = vec![S::zero(); bsz];
                for s in 0..bsz {
                    let mut z = b.data()[0];
                    for ch in 0..p {
                        let seg = &act.row(&[s, ch])[c..c + len];
                        for (fi, f) in bank.iter().enumerate() {
                            let v: S = f.iter().zip(seg).map(|(&a, &x)| a * x).sum();
                            phi[(s * k + fi) * p + ch] = v;
                            z += omega.data()[fi * p + ch] * v;
                        }
                    }
                    logits[s] = z;
                }
                saved.push(Saved::Features {
                    phi: Tensor::from_parts(vec![bsz, k, p], phi),
                });
                act = Tensor::from_parts(vec![bsz, 1], logits);
                pi += 1;
            }
            LayerDef::Conv { .. } => {
                let LayerParams::Conv { w, b } = &params.layers[pi] else {
                    return Err(param_mismatch(pi, "conv"));
                };
                let (y, cache) = correlate(&act, w, b, 1)?;
                saved.push(Saved::Layer(LayerCache::Correlate(cache)));
                act = y;
                pi += 1;
            }
            LayerDef::BatchNorm { .. } => {
                let LayerParams::BatchNorm { gamma, beta, running } = &params.layers[pi] else {
                    return Err(param_mismatch(pi, "batchnorm"));
                };
                let flat = act.rank() == 2;
                let x = if flat {
                    let m = act.shape()[1];
                    act.reshape(&[bsz, m, 1])?
                } else {
                    act
                };
                let out = batchnorm_forward(&x, gamma, beta, running, mode)?;
                if let Some(r) = out.running {
                    bn_updates.push((pi, r));
                }
                warnings.extend(out.warning);
                let cache = LayerCache::BatchNorm(out.cache);
                if flat {
                    let m = out.y.shape()[1];
                    act = out.y.reshape(&[bsz, m])?;
                    saved.push(Saved::BatchNormFlat(cache));
                } else {
                    act = out.y;
                    saved.push(Saved::Layer(cache));
                }
                pi += 1;
            }
            LayerDef::Relu => {
                let (y, cache) = relu(&act);
                saved.push(Saved::Layer(LayerCache::Relu(cache)));
                act = y;
            }
            LayerDef::MaxPool { kernel, stride } => {
                let (y, cache) = maxpool(&act, kernel, stride)?;
                saved.push(Saved::Layer(LayerCache::MaxPool(cache)));
                act = y;
            }
            LayerDef::Flatten => {
                let shape = act.shape().to_vec();
                let n = act.len() / bsz;
                act = act.reshape(&[bsz, n])?;
                saved.push(Saved::Flatten { shape });
            }
            LayerDef::Linear { .. } => {
                let LayerParams::Linear { w, b } = &params.layers[pi] else {
                    return Err(param_mismatch(pi, "linear"));
                };
                let (y, cache) = linear_forward(&act, w, b)?;
                saved.push(Saved::Layer(LayerCache::Linear(cache)));
                act = y;
                pi += 1;
            }
        }
    }
    if act.len() != bsz {
        return Err(Error::shape("forward", "final output per sample", 1, act.len() / bsz));
    }
    let logits = act.into_data();
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardPass {
        logits,
        probs,
        caches: Caches {
            kind: spec.kind,
            batch: bsz,
            saved,
        },
        bn_updates,
        warnings,
    })
}

fn param_mismatch(i: usize, want: &str) -> Error {
    Error::invalid(format!("parameter layer {i} is not a {want} layer"))
}

fn cache_err(detail: impl Into<String>) -> Error {
    Error::Cache {
        op: "backward",
        detail: detail.into(),
    }
}

/// Gradients of `sum_b grad_logits[b] * logit_b` with respect to every trainable tensor.
pub fn backward<S: Scalar>(
    spec: &ArchitectureSpec,
    params: &ModelParams<S>,
    caches: &Caches<S>,
    grad_logits: &[S],
) -> Result<ModelParams<S>> {
    let defs = spec.layers();
    if caches.kind != spec.kind || caches.saved.len() != defs.len() {
        return Err(cache_err(format!(
            "caches from a {} pass with {} layers, spec is {} with {} layers",
            caches.kind,
            caches.saved.len(),
            spec.kind,
            defs.len()
        )));
    }
    if grad_logits.len() != caches.batch {
        return Err(cache_err(format!(
            "{} logit gradients for a batch of {}",
            grad_logits.len(),
            caches.batch
        )));
    }
    params.check_against(spec)?;
    let bsz = caches.batch;
    let mut grads = params.zeros_like();
    let mut g = Tensor::from_parts(vec![bsz, 1], grad_logits.to_vec());
    let mut pi = params.layers.len();
    for (li, (def, saved)) in defs.iter().zip(&caches.saved).enumerate().rev() {
        let first = li == 0;
        match (def, saved) {
            (LayerDef::FixedCombination { .. }, Saved::Features { phi }) => {
                pi -= 1;
                let [_, k, p] = [phi.shape()[0], phi.shape()[1], phi.shape()[2]];
                let LayerParams::Combination { omega: go, b: gb } = &mut grads.layers[pi] else {
                    unreachable!()
                };
                for s in 0..bsz {
                    let gs = g.data()[s];
                    gb.data_mut()[0] += gs;
                    let ph = phi.outer(s);
                    for (o, &f) in go.data_mut().iter_mut().zip(ph).take(k * p) {
                        *o += gs * f;
                    }
                }
            }
            (LayerDef::Conv { .. }, Saved::Layer(LayerCache::Correlate(cache))) => {
                pi -= 1;
                let LayerParams::Conv { w, .. } = &params.layers[pi] else {
                    unreachable!()
                };
                let cg = correlate_vjp_with(cache, w, &g, !first)?;
                grads.layers[pi] = LayerParams::Conv { w: cg.w, b: cg.b };
                if let Some(x) = cg.x {
                    g = x;
                }
            }
            (LayerDef::BatchNorm { .. }, Saved::Layer(LayerCache::BatchNorm(cache)))
            | (LayerDef::BatchNorm { .. }, Saved::BatchNormFlat(LayerCache::BatchNorm(cache))) => {
                pi -= 1;
                let LayerParams::BatchNorm { gamma, running, .. } = &params.layers[pi] else {
                    unreachable!()
                };
                let flat = matches!(saved, Saved::BatchNormFlat(_));
                let gin = if flat {
                    let m = g.shape()[1];
                    g.reshape(&[bsz, m, 1])?
                } else {
                    g
                };
                let bg = batchnorm_vjp(cache, gamma, &gin)?;
                grads.layers[pi] = LayerParams::BatchNorm {
                    gamma: bg.gamma,
                    beta: bg.beta,
                    running: running.clone(),
                };
                g = if flat {
                    let m = bg.x.shape()[1];
                    bg.x.reshape(&[bsz, m])?
                } else {
                    bg.x
                };
            }
            (LayerDef::Relu, Saved::Layer(LayerCache::Relu(cache))) => {
                g = relu_vjp(cache, &g)?;
            }
            (LayerDef::MaxPool { .. }, Saved::Layer(LayerCache::MaxPool(cache))) => {
                g = maxpool_vjp(cache, &g)?;
            }
            (LayerDef::Flatten, Saved::Flatten { shape }) => {
                g = g.reshape(shape)?;
            }
            (LayerDef::Linear { .. }, Saved::Layer(LayerCache::Linear(cache))) => {
                pi -= 1;
                let LayerParams::Linear { w, .. } = &params.layers[pi] else {
                    unreachable!()
                };
                let lg = linear_vjp(cache, w, &g, !first)?;
                grads.layers[pi] = LayerParams::Linear { w: lg.w, b: lg.b };
                if let Some(x) = lg.x {
                    g = x;
                }
            }
            (def, _) => return Err(cache_err(format!("layer {li} ({}) has a cache of another kind", def.name()))),
        }
    }
    Ok(grads)
}

/// Folds Train-mode running statistics into the parameters.
pub fn apply_bn_updates<S: Scalar>(params: &mut ModelParams<S>, updates: Vec<(usize, RunningStats<S>)>) {
    for (i, stats) in updates {
        if let LayerParams::BatchNorm { running, .. } = &mut params.layers[i] {
            *running = stats;
        }
    }
}

/// Eval-mode logits for `windows: [N x P x T]`, processed in chunks.
pub fn predict_logits<S: Scalar>(spec: &ArchitectureSpec, params: &ModelParams<S>, windows: &Tensor<S>) -> Result<Vec<S>> {
    let n = check_batch(spec, windows)?;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let chunk = windows.gather(&idx);
        out.extend(forward(spec, params, &chunk, Mode::Eval)?.logits);
    }
    Ok(out)
}

pub fn predict<S: Scalar>(spec: &ArchitectureSpec, params: &ModelParams<S>, windows: &Tensor<S>) -> Result<Vec<S>> {
    Ok(predict_logits(spec, params, windows)?.into_iter().map(sigmoid).collect())
}

/// Per-map activity of the first ReLU layer over `windows`: `true` if the map
/// produced any positive output. `None` for architectures without a ReLU.
pub fn hidden_map_activity<S: Scalar>(
    spec: &ArchitectureSpec,
    params: &ModelParams<S>,
    windows: &Tensor<S>,
) -> Result<Option<Vec<bool>>> {
    let defs = spec.layers();
    let Some(relu_at) = defs.iter().position(|d| *d == LayerDef::Relu) else {
        return Ok(None);
    };
    let n = check_batch(spec, windows)?;
    let mut active: Option<Vec<bool>> = None;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let pass = forward(spec, params, &windows.gather(&idx), Mode::Eval)?;
        let Saved::Layer(LayerCache::Relu(cache)) = &pass.caches.saved[relu_at] else {
            unreachable!()
        };
        let shape = cache.shape();
        let maps = shape[1];
        let len = if shape.len() == 3 { shape[2] } else { 1 };
        let flags = active.get_or_insert_with(|| vec![false; maps]);
        for (i, &a) in cache.active().iter().enumerate() {
            if a {
                flags[(i / len) % maps] = true;
            }
        }
    }
    Ok(active)
}
