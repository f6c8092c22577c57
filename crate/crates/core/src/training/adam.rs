use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments for every trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ModelParams<S>) -> Self {
        let zeros: Vec<Tensor<S>> = params.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam step with coupled weight decay (`g + lambda * theta`).
pub fn adam_step<S: Scalar>(
    params: &mut ModelParams<S>,
    grads: &ModelParams<S>,
    state: &mut AdamState<S>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let names: Vec<String> = grads.named_trainable().into_iter().map(|(n, _)| n).collect();
    let gs = grads.trainable();
    for (name, g) in names.iter().zip(&gs) {
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let ps = params.trainable_mut();
    if ps.len() != gs.len() || ps.len() != state.m.len() {
        return Err(Error::shape("adam_step", "tensor count", ps.len(), gs.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = S::of(1.0 - ADAM_BETA1.powi(t));
    let c2 = S::of(1.0 - ADAM_BETA2.powi(t));
    let (b1, b2, eps, lr_s, wd) = (
        S::of(ADAM_BETA1),
        S::of(ADAM_BETA2),
        S::of(ADAM_EPS),
        S::of(lr),
        S::of(weight_decay),
    );
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        if p.shape() != g.shape() || m.shape() != g.shape() {
            return Err(Error::shape("adam_step", "tensor size", p.len(), g.len()));
        }
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let gi = if weight_decay != 0.0 { gi + wd * *pi } else { gi };
            *mi = b1 * *mi + (S::one() - b1) * gi;
            *vi = b2 * *vi + (S::one() - b2) * gi * gi;
            let mh = *mi / c1;
            let vh = *vi / c2;
            *pi -= lr_s * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, ArchitectureSpec, ModelKind};

    fn setup() -> (ModelParams<f64>, ModelParams<f64>) {
        let spec = ArchitectureSpec::new(ModelKind::LF, 2, 3);
        let p = build::<f64>(&spec, 0).unwrap();
        let g = p.zeros_like();
        (p, g)
    }

    #[test]
    fn zero_grads_leave_params() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_size() {
        let (mut p, mut g) = setup();
        g.trainable_mut().into_iter().for_each(|t| t.fill(0.5));
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.1, 0.0).unwrap();
        for (a, b) in p.trainable().iter().zip(before.trainable()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                // -lr * 0.5 / (0.5 + 1e-8)
                assert!((x - y + 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let (mut p, mut g) = setup();
        g.trainable_mut()[1].data_mut()[0] = f64::NAN;
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("layer0"), "{err}");
    }
}
