//! Straight-line re-implementation of every model's forward pass on nested
//! vectors, compared with the library's layer-table driven `forward`.

use auxnet::layers::{Mode, BN_EPS};
use auxnet::models::{build, forward, ff_as_lf, LayerParams};
use auxnet::{ArchitectureSpec, ModelKind, ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Maps = Vec<Vec<f64>>;

fn conv(x: &Maps, w: &Tensor<f64>, b: &Tensor<f64>) -> Maps {
    let (pout, pin, d) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let lout = x[0].len() - d + 1;
    let mut out = vec![vec![0.0; lout]; pout];
    for i in 0..pout {
        for t in 0..lout {
            let mut s = b.data()[i];
            for j in 0..pin {
                for k in 0..d {
                    s += w.get(&[i, j, k]) * x[j][t + k];
                }
            }
            out[i][t] = s;
        }
    }
    out
}

fn relu(x: &mut Maps) {
    x.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
}

fn pool(x: &Maps) -> Maps {
    x.iter()
        .map(|row| (0..(row.len() - 2) / 2 + 1).map(|t| row[2 * t].max(row[2 * t + 1])).collect())
        .collect()
}

fn dense(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    (0..m).map(|i| b.data()[i] + (0..n).map(|j| w.get(&[i, j]) * x[j]).sum::<f64>()).collect()
}

/// Batchnorm over a whole batch `[B][maps][len]`.
fn batchnorm(batch: &mut [Maps], layer: &LayerParams<f64>, mode: Mode) {
    let LayerParams::BatchNorm { gamma, beta, running } = layer else {
        panic!("expected batchnorm")
    };
    for c in 0..gamma.len() {
        let (mean, var) = match mode {
            Mode::Eval => (running.mean.data()[c], running.var.data()[c]),
            Mode::Train => {
                let vals: Vec<f64> = batch.iter().flat_map(|s| s[c].iter().copied()).collect();
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                (m, vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
            }
        };
        for s in batch.iter_mut() {
            for v in s[c].iter_mut() {
                *v = gamma.data()[c] * (*v - mean) / (var + BN_EPS).sqrt() + beta.data()[c];
            }
        }
    }
}

fn conv_params(l: &LayerParams<f64>) -> (&Tensor<f64>, &Tensor<f64>) {
    match l {
        LayerParams::Conv { w, b } | LayerParams::Linear { w, b } => (w, b),
        other => panic!("expected weights, got {}", other.kind()),
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Impulse, step, ramp, boxcar, first difference; all unit norm.
fn bank(d: usize) -> Vec<Vec<f64>> {
    let c = (d - 1) / 2;
    let mut impulse = vec![0.0; d];
    impulse[c] = 1.0;
    let step = (0..d)
        .map(|i| {
            if 2 * i + 1 == d {
                0.0
            } else if 2 * i < d {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let ramp = (0..d).map(|i| i as f64 - (d as f64 - 1.0) / 2.0).collect();
    let mut diff = vec![0.0; d];
    diff[c] = -1.0;
    diff[c + 1] = 1.0;
    vec![impulse, step, ramp, vec![1.0; d], diff]
        .into_iter()
        .map(unit)
        .collect()
}

/// Logits for a batch, one architecture at a time.
fn oracle(spec: &ArchitectureSpec, params: &ModelParams<f64>, xs: &[Maps], mode: Mode) -> Vec<f64> {
    let l = &params.layers;
    match spec.kind {
        ModelKind::FF => {
            let LayerParams::Combination { omega, b } = &l[0] else { panic!() };
            let d = spec.ff_len();
            let t = spec.input_len;
            let start = (t - 1) / 2 - (d - 1) / 2;
            let fs = bank(d);
            xs.iter()
                .map(|x| {
                    let mut z = b.data()[0];
                    for (k, f) in fs.iter().enumerate() {
                        for (p, row) in x.iter().enumerate() {
                            let phi: f64 = f.iter().zip(&row[start..start + d]).map(|(a, v)| a * v).sum();
                            z += omega.get(&[k, p]) * phi;
                        }
                    }
                    z
                })
                .collect()
        }
        ModelKind::LF => xs
            .iter()
            .map(|x| {
                let (w, b) = conv_params(&l[0]);
                conv(x, w, b)[0][0]
            })
            .collect(),
        ModelKind::OneHid | ModelKind::OneHidReLU => xs
            .iter()
            .map(|x| {
                let (w, b) = conv_params(&l[0]);
                let mut h = conv(x, w, b);
                if spec.kind == ModelKind::OneHidReLU {
                    relu(&mut h);
                }
                let flat: Vec<f64> = h.into_iter().flatten().collect();
                let (w, b) = conv_params(&l[1]);
                dense(&flat, w, b)[0]
            })
            .collect(),
        _ => vgg(spec, params, xs, mode),
    }
}

fn vgg(spec: &ArchitectureSpec, params: &ModelParams<f64>, xs: &[Maps], mode: Mode) -> Vec<f64> {
    let bn = spec.kind == ModelKind::VGG13BN;
    let mut layers = params.layers.iter();
    let mut acts: Vec<Maps> = xs.to_vec();
    let conv_block = |acts: &mut Vec<Maps>, layers: &mut std::slice::Iter<LayerParams<f64>>| {
        let (w, b) = conv_params(layers.next().unwrap());
        for a in acts.iter_mut() {
            *a = conv(a, w, b);
        }
        if bn {
            batchnorm(acts, layers.next().unwrap(), mode);
        }
        acts.iter_mut().for_each(relu);
    };
    let stages: &[usize] = if spec.kind == ModelKind::VGG6 { &[2, 3] } else { &[2, 3, 3, 3] };
    for &n in stages {
        for _ in 0..n {
            conv_block(&mut acts, &mut layers);
        }
        acts = acts.iter().map(pool).collect();
    }
    let mut flat: Vec<Maps> = acts.iter().map(|a| vec![a.iter().flatten().copied().collect()]).collect();
    if spec.kind != ModelKind::VGG6 {
        let (w, b) = conv_params(layers.next().unwrap());
        // hidden layer as [B][m][1] so batchnorm sees one value per sample
        let mut hidden: Vec<Maps> = flat.iter().map(|f| dense(&f[0], w, b).into_iter().map(|v| vec![v]).collect()).collect();
        if bn {
            batchnorm(&mut hidden, layers.next().unwrap(), mode);
        }
        hidden.iter_mut().for_each(relu);
        flat = hidden.iter().map(|h| vec![h.iter().flatten().copied().collect()]).collect();
    }
    let (w, b) = conv_params(layers.next().unwrap());
    assert!(layers.next().is_none(), "unused parameters");
    flat.iter().map(|f| dense(&f[0], w, b)[0]).collect()
}

fn tiny(kind: ModelKind) -> ArchitectureSpec {
    if kind.is_vgg() {
        ArchitectureSpec::vgg(kind, 3).with_width(3.0 / 128.0, 5)
    } else {
        ArchitectureSpec::new(kind, 4, 17).with_hidden_maps(6)
    }
}

fn randomise(params: &mut ModelParams<f64>, rng: &mut ChaCha8Rng) {
    for l in &mut params.layers {
        if let LayerParams::BatchNorm { gamma, beta, running } = l {
            gamma.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
            beta.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            running.mean.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
            running.var.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
            running.updates = 1;
        }
    }
    // biases start at small values; spread them so ReLUs sit on both sides
    for t in params.trainable_mut() {
        if t.rank() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
        }
    }
}

fn batch(spec: &ArchitectureSpec, n: usize, rng: &mut ChaCha8Rng) -> (Tensor<f64>, Vec<Maps>) {
    let xs: Vec<Maps> = (0..n)
        .map(|_| {
            (0..spec.n_channels)
                .map(|_| (0..spec.input_len).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect();
    let flat: Vec<f64> = xs.iter().flatten().flatten().copied().collect();
    (Tensor::new(vec![n, spec.n_channels, spec.input_len], flat).unwrap(), xs)
}

fn check(kind: ModelKind, mode: Mode, seeds: u64) {
    for seed in 0..seeds {
        let spec = tiny(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = build::<f64>(&spec, seed).unwrap();
        randomise(&mut params, &mut rng);
        let (x, xs) = batch(&spec, 4, &mut rng);
        let got = forward(&spec, &params, &x, mode).unwrap();
        let want = oracle(&spec, &params, &xs, mode);
        for (g, w) in got.logits.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{kind} {mode:?} seed {seed}: {g} vs {w}");
        }
        for (p, z) in got.probs.iter().zip(&got.logits) {
            assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
        }
    }
}

#[test]
fn flat_models_match_oracle() {
    for kind in [ModelKind::FF, ModelKind::LF, ModelKind::OneHid, ModelKind::OneHidReLU] {
        check(kind, Mode::Eval, 20);
    }
}

#[test]
fn ff_with_short_filters_matches_oracle() {
    for d in [4, 5, 9] {
        let mut spec = ArchitectureSpec::new(ModelKind::FF, 3, 12);
        spec.ff_filter_len = Some(d);
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let params = build::<f64>(&spec, 3).unwrap();
        let (x, xs) = batch(&spec, 5, &mut rng);
        let got = forward(&spec, &params, &x, Mode::Eval).unwrap().logits;
        let want = oracle(&spec, &params, &xs, Mode::Eval);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "d={d}: {g} vs {w}");
        }
    }
}

#[test]
fn vgg_models_match_oracle() {
    check(ModelKind::VGG6, Mode::Eval, 5);
    check(ModelKind::VGG13, Mode::Eval, 5);
    check(ModelKind::VGG13BN, Mode::Eval, 5);
    check(ModelKind::VGG13BN, Mode::Train, 5);
}

#[test]
fn eval_mode_is_deterministic_and_train_differs_only_through_batchnorm() {
    for kind in [ModelKind::VGG13, ModelKind::VGG13BN] {
        let spec = tiny(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = build::<f64>(&spec, 2).unwrap();
        randomise(&mut params, &mut rng);
        let (x, _) = batch(&spec, 3, &mut rng);
        let e1 = forward(&spec, &params, &x, Mode::Eval).unwrap().logits;
        let e2 = forward(&spec, &params, &x, Mode::Eval).unwrap().logits;
        assert_eq!(e1, e2);
        let t = forward(&spec, &params, &x, Mode::Train).unwrap().logits;
        if kind == ModelKind::VGG13 {
            assert_eq!(t, e1);
        } else {
            assert_ne!(t, e1);
        }
    }
}

#[test]
fn ff_equals_its_lf_embedding_on_oracle_windows() {
    let spec = ArchitectureSpec::new(ModelKind::FF, 5, 20);
    let params = build::<f64>(&spec, 9).unwrap();
    let (lf_spec, lf_params) = ff_as_lf(&spec, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (_, xs) = batch(&spec, 50, &mut rng);
    let ff = oracle(&spec, &params, &xs, Mode::Eval);
    let lf = oracle(&lf_spec, &lf_params, &xs, Mode::Eval);
    for (a, b) in ff.iter().zip(&lf) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}
