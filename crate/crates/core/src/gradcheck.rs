//! Central finite-difference checks of the layer adjoints and of whole-network
//! backward passes, on small random problems.

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::Result;
use crate::layers::{
    batchnorm_forward, batchnorm_vjp, bce_loss, bce_mean, correlate, correlate_len, correlate_vjp, linear_forward,
    linear_vjp, maxpool, maxpool_vjp, relu, relu_vjp, Label, Mode, RunningStats,
};
use crate::models::{backward, build, forward, ArchitectureSpec, LayerParams, ModelKind, ModelParams};
use crate::rng::{stream, Rng, Stream};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-6;

/// Relative agreement between differences at `h` and `h / 10` away from kinks.
pub const KINK_AGREEMENT: f64 = 1e-6;

/// Outcome of one comparison between analytic and numerical gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// `|a - n| / max(|a|, |n|, 1e-8)` over the checked coordinates (2-norms).
    pub rel_err: f64,
    pub coords: usize,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(1e-8);
    diff / scale
}

/// Central differences of `f` at `x` along the listed coordinates.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central differences that step over kinks.
///
/// A ReLU or pooling switch inside `[x - h, x + h]` makes the difference at
/// `h` disagree with the one at `h / 10`; the step shrinks tenfold until two
/// consecutive estimates agree to `KINK_AGREEMENT`, down to `1e-9`.
pub fn kink_aware_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut diff = |i: usize, step: f64| {
        xp[i] = x[i] + step;
        let up = f(&xp);
        xp[i] = x[i] - step;
        let down = f(&xp);
        xp[i] = x[i];
        (up - down) / (2.0 * step)
    };
    coords
        .iter()
        .map(|&i| {
            let mut step = h;
            let mut coarse = diff(i, step);
            while step > 1e-9 {
                let fine = diff(i, step / 10.0);
                if (coarse - fine).abs() <= KINK_AGREEMENT * coarse.abs().max(1.0) {
                    break;
                }
                step /= 10.0;
                coarse = fine;
            }
            coarse
        })
        .collect()
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn compare(name: &str, analytic: &Tensor<f64>, f: impl FnMut(&[f64]) -> f64, x: &Tensor<f64>) -> GradCheck {
    let coords = all(x.len());
    let numeric = central_difference(f, x.data(), &coords, FD_STEP);
    GradCheck {
        name: name.to_string(),
        rel_err: relative_error(analytic.data(), &numeric),
        coords: coords.len(),
    }
}

fn with(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_parts(t.shape().to_vec(), data.to_vec())
}

/// Checks every layer adjoint on random problems drawn from `seed`.
///
/// Each scalar objective is `<r, layer(x)>` for a random `r`, so the adjoint
/// applied to `r` must match the numerical gradient.
pub fn check_layers(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = stream(seed, Stream::Init);
    let mut out = Vec::new();

    // correlation, batched, with random stride
    let (b, pin, pout) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
    let l = rng.random_range(4..=8);
    let d = rng.random_range(1..=l.min(4));
    let stride = rng.random_range(1..=2);
    let x = uniform(&mut rng, &[b, pin, l], -1.0, 1.0);
    let w = uniform(&mut rng, &[pout, pin, d], -1.0, 1.0);
    let bias = uniform(&mut rng, &[pout], -1.0, 1.0);
    let lout = correlate_len(l, d, stride).expect("kernel fits");
    let r = uniform(&mut rng, &[b, pout, lout], -1.0, 1.0);
    let (_, cache) = correlate(&x, &w, &bias, stride)?;
    let g = correlate_vjp(&cache, &w, &r)?;
    let obj = |x: &Tensor<f64>, w: &Tensor<f64>, bias: &Tensor<f64>| dot(&correlate(x, w, bias, stride).unwrap().0, &r);
    out.push(compare("correlate.x", g.x.as_ref().expect("input grad"), |v| obj(&with(&x, v), &w, &bias), &x));
    out.push(compare("correlate.w", &g.w, |v| obj(&x, &with(&w, v), &bias), &w));
    out.push(compare("correlate.b", &g.b, |v| obj(&x, &w, &with(&bias, v)), &bias));

    // relu, inputs kept away from the kink
    let mut x = uniform(&mut rng, &[2, 3, 5], -1.0, 1.0);
    x.data_mut().iter_mut().for_each(|v| {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    });
    let r = uniform(&mut rng, x.shape(), -1.0, 1.0);
    let (_, cache) = relu(&x);
    let gx = relu_vjp(&cache, &r)?;
    out.push(compare("relu.x", &gx, |v| dot(&relu(&with(&x, v)).0, &r), &x));

    // max pooling on well-separated values so no window is near a tie
    let (k, s) = if rng.random_bool(0.5) { (2, 2) } else { (3, 1) };
    let l = rng.random_range(k..=9);
    let n = 2 * 2 * l;
    let order = sample(&mut rng, n, n).into_vec();
    let vals: Vec<f64> = order.iter().map(|&o| o as f64 * 0.1 + rng.random_range(0.0..0.01)).collect();
    let x = Tensor::from_parts(vec![2, 2, l], vals);
    let (y, cache) = maxpool(&x, k, s)?;
    let r = uniform(&mut rng, y.shape(), -1.0, 1.0);
    let gx = maxpool_vjp(&cache, &r)?;
    out.push(compare("maxpool.x", &gx, |v| dot(&maxpool(&with(&x, v), k, s).unwrap().0, &r), &x));

    // batch normalisation in both modes; with only two values per channel the
    // training-mode output is ±gamma up to O(eps), so at least three are drawn
    let (b, p) = (rng.random_range(2..=3), rng.random_range(1..=3));
    let l = rng.random_range(if b == 2 { 2 } else { 1 }..=4);
    let x = uniform(&mut rng, &[b, p, l], -2.0, 2.0);
    let gamma = uniform(&mut rng, &[p], 0.5, 1.5);
    let beta = uniform(&mut rng, &[p], -0.5, 0.5);
    let running = RunningStats {
        mean: uniform(&mut rng, &[p], -0.5, 0.5),
        var: uniform(&mut rng, &[p], 0.5, 2.0),
        updates: 3,
    };
    let r = uniform(&mut rng, x.shape(), -1.0, 1.0);
    for (mode, tag) in [(Mode::Train, "train"), (Mode::Eval, "eval")] {
        let bn = |x: &Tensor<f64>, g: &Tensor<f64>, bt: &Tensor<f64>| {
            dot(&batchnorm_forward(x, g, bt, &running, mode).unwrap().y, &r)
        };
        let fwd = batchnorm_forward(&x, &gamma, &beta, &running, mode)?;
        let g = batchnorm_vjp(&fwd.cache, &gamma, &r)?;
        out.push(compare(&format!("batchnorm.{tag}.x"), &g.x, |v| bn(&with(&x, v), &gamma, &beta), &x));
        out.push(compare(&format!("batchnorm.{tag}.gamma"), &g.gamma, |v| bn(&x, &with(&gamma, v), &beta), &gamma));
        out.push(compare(&format!("batchnorm.{tag}.beta"), &g.beta, |v| bn(&x, &gamma, &with(&beta, v)), &beta));
    }

    // fully connected, batched
    let (b, n, m) = (rng.random_range(1..=3), rng.random_range(1..=5), rng.random_range(1..=4));
    let x = uniform(&mut rng, &[b, n], -1.0, 1.0);
    let w = uniform(&mut rng, &[m, n], -1.0, 1.0);
    let bias = uniform(&mut rng, &[m], -1.0, 1.0);
    let r = uniform(&mut rng, &[b, m], -1.0, 1.0);
    let (_, cache) = linear_forward(&x, &w, &bias)?;
    let g = linear_vjp(&cache, &w, &r, true)?;
    let obj = |x: &Tensor<f64>, w: &Tensor<f64>, bias: &Tensor<f64>| dot(&linear_forward(x, w, bias).unwrap().0, &r);
    out.push(compare("linear.x", g.x.as_ref().expect("input grad"), |v| obj(&with(&x, v), &w, &bias), &x));
    out.push(compare("linear.w", &g.w, |v| obj(&x, &with(&w, v), &bias), &w));
    out.push(compare("linear.b", &g.b, |v| obj(&x, &w, &with(&bias, v)), &bias));

    // loss with respect to the logits
    let z = uniform(&mut rng, &[4], -4.0, 4.0);
    let labels: Vec<Label> = (0..4).map(|_| if rng.random_bool(0.5) { Label::Positive } else { Label::Negative }).collect();
    let (_, dz) = bce_mean(z.data(), &labels)?;
    let mean_loss = |v: &[f64]| v.iter().zip(&labels).map(|(&z, &y)| bce_loss(z, y)).sum::<f64>() / v.len() as f64;
    out.push(compare("bce.logit", &Tensor::from_vec(dz), mean_loss, &z));
    Ok(out)
}

/// Tiny instance of `kind`: `P = 3`, `T = 16` for the flat models, two maps
/// per first VGG layer at the fixed VGG lengths.
pub fn tiny_spec(kind: ModelKind) -> ArchitectureSpec {
    if kind.is_vgg() {
        ArchitectureSpec::vgg(kind, 3).with_width(2.0 / 128.0, 4)
    } else {
        ArchitectureSpec::new(kind, 3, 16).with_hidden_maps(4)
    }
}

fn perturb_batchnorm(params: &mut ModelParams<f64>, rng: &mut Rng) {
    for layer in &mut params.layers {
        if let LayerParams::BatchNorm { gamma, beta, running } = layer {
            gamma.data_mut().iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            beta.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            running.mean.data_mut().iter_mut().for_each(|m| *m = rng.random_range(-0.2..0.2));
            running.var.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
            running.updates = 1;
        }
    }
}

/// Compares `backward` with central differences of the mean loss over a
/// random batch, for every trainable tensor of a tiny `kind` network.
///
/// `max_coords` caps the coordinates probed per tensor (chosen at random).
pub fn check_architecture(kind: ModelKind, seed: u64, mode: Mode, max_coords: Option<usize>) -> Result<GradCheck> {
    let spec = tiny_spec(kind);
    let mut rng = stream(seed, Stream::Synth);
    let mut params = build::<f64>(&spec, seed)?;
    perturb_batchnorm(&mut params, &mut rng);
    let bsz = 3;
    let x = uniform(&mut rng, &[bsz, spec.n_channels, spec.input_len], -1.0, 1.0);
    let labels = [Label::Positive, Label::Negative, Label::Positive];

    let loss = |p: &ModelParams<f64>| -> f64 {
        let pass = forward(&spec, p, &x, mode).expect("forward");
        bce_mean(&pass.logits, &labels).expect("loss").0
    };
    let pass = forward(&spec, &params, &x, mode)?;
    let (_, dz) = bce_mean(&pass.logits, &labels)?;
    let grads = backward(&spec, &params, &pass.caches, &dz)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let n_tensors = params.trainable().len();
    for ti in 0..n_tensors {
        let len = params.trainable()[ti].len();
        let coords = match max_coords {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => all(len),
        };
        let g = grads.trainable()[ti];
        analytic.extend(coords.iter().map(|&c| g.data()[c]));
        let base = params.trainable()[ti].data().to_vec();
        let mut probe = params.clone();
        let num = kink_aware_difference(
            |v| {
                probe.trainable_mut()[ti].data_mut().copy_from_slice(v);
                loss(&probe)
            },
            &base,
            &coords,
            FD_STEP,
        );
        numeric.extend(num);
    }
    Ok(GradCheck {
        name: format!("{}.{mode:?}", spec.kind),
        rel_err: relative_error(&analytic, &numeric),
        coords: analytic.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[3.0, 4.0], &[3.0, 4.5]) - 0.5 / 29.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn difference_of_a_cubic() {
        let g = central_difference(|v| v[0].powi(3) + 2.0 * v[1], &[2.0, 7.0], &[0, 1], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn kink_near_the_probe() {
        let f = |v: &[f64]| (v[0] - 3e-7).max(0.0) * 2.0;
        assert!((central_difference(f, &[0.0], &[0], 1e-6)[0] - 0.7).abs() < 1e-9);
        assert!((kink_aware_difference(f, &[0.0], &[0], 1e-6)[0]).abs() < 1e-9);
        let g = kink_aware_difference(|v| v[0].powi(3), &[2.0], &[0], 1e-6);
        assert!((g[0] - 12.0).abs() < 1e-6);
    }
}
