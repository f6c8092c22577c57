use rand::Rng as _;

use super::spec::{ArchitectureSpec, LayerDef};
use crate::error::{Error, Result};
use crate::layers::RunningStats;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Learned state of one parametric layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<S> {
    /// `omega: [K x P]` weights over fixed features plus a scalar bias `[1]`.
    Combination { omega: Tensor<S>, b: Tensor<S> },
    /// `w: [Pout x Pin x d]`, `b: [Pout]`.
    Conv { w: Tensor<S>, b: Tensor<S> },
    /// `w: [m x n]`, `b: [m]`.
    Linear { w: Tensor<S>, b: Tensor<S> },
    /// Learnable scale/shift and running statistics.
    BatchNorm {
        gamma: Tensor<S>,
        beta: Tensor<S>,
        running: RunningStats<S>,
    },
}

impl<S: Scalar> LayerParams<S> {
    /// Trainable tensors, in a fixed order.
    pub fn trainable(&self) -> Vec<&Tensor<S>> {
        match self {
            LayerParams::Combination { omega, b } => vec![omega, b],
            LayerParams::Conv { w, b } | LayerParams::Linear { w, b } => vec![w, b],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            LayerParams::Combination { omega, b } => vec![omega, b],
            LayerParams::Conv { w, b } | LayerParams::Linear { w, b } => vec![w, b],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    fn trainable_names(&self) -> [&'static str; 2] {
        match self {
            LayerParams::Combination { .. } => ["omega", "b"],
            LayerParams::Conv { .. } | LayerParams::Linear { .. } => ["w", "b"],
            LayerParams::BatchNorm { .. } => ["gamma", "beta"],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerParams::Combination { .. } => "combination",
            LayerParams::Conv { .. } => "conv",
            LayerParams::Linear { .. } => "linear",
            LayerParams::BatchNorm { .. } => "batchnorm",
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<S>| Tensor::zeros(t.shape());
        match self {
            LayerParams::Combination { omega, b } => LayerParams::Combination { omega: z(omega), b: z(b) },
            LayerParams::Conv { w, b } => LayerParams::Conv { w: z(w), b: z(b) },
            LayerParams::Linear { w, b } => LayerParams::Linear { w: z(w), b: z(b) },
            LayerParams::BatchNorm { gamma, beta, running } => LayerParams::BatchNorm {
                gamma: z(gamma),
                beta: z(beta),
                running: running.clone(),
            },
        }
    }
}

/// Parameters of every parametric layer, in layer-table order.
///
/// The same structure doubles as a gradient container (running statistics
/// are carried along but never differentiated).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    /// `(name, tensor)` for every trainable tensor.
    pub fn named_trainable(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.trainable_names().iter().zip(l.trainable()) {
                out.push((format!("layer{i}.{}.{name}", l.kind()), t));
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers.iter_mut().flat_map(|l| l.trainable_mut()).collect()
    }

    pub fn trainable(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| l.trainable()).collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// The lowest-layer weight tensor on which group sparsity acts.
    pub fn layer0_weight(&self) -> &Tensor<S> {
        match &self.layers[0] {
            LayerParams::Combination { omega, .. } => omega,
            LayerParams::Conv { w, .. } => w,
            other => panic!("first layer is {}, expected conv or combination", other.kind()),
        }
    }

    pub fn layer0_weight_mut(&mut self) -> &mut Tensor<S> {
        match &mut self.layers[0] {
            LayerParams::Combination { omega, .. } => omega,
            LayerParams::Conv { w, .. } => w,
            other => panic!("first layer is {}, expected conv or combination", other.kind()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.all_finite())
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerParams::Combination { omega, b } => LayerParams::Combination {
                        omega: omega.cast(),
                        b: b.cast(),
                    },
                    LayerParams::Conv { w, b } => LayerParams::Conv { w: w.cast(), b: b.cast() },
                    LayerParams::Linear { w, b } => LayerParams::Linear { w: w.cast(), b: b.cast() },
                    LayerParams::BatchNorm { gamma, beta, running } => LayerParams::BatchNorm {
                        gamma: gamma.cast(),
                        beta: beta.cast(),
                        running: RunningStats {
                            mean: running.mean.cast(),
                            var: running.var.cast(),
                            updates: running.updates,
                        },
                    },
                })
                .collect(),
        }
    }

    /// Checks every tensor against the shapes implied by `spec`.
    pub fn check_against(&self, spec: &ArchitectureSpec) -> Result<()> {
        let expected = expected_shapes(spec);
        if expected.len() != self.layers.len() {
            return Err(Error::shape("ModelParams", "parametric layers", expected.len(), self.layers.len()));
        }
        for (i, (exp, got)) in expected.iter().zip(&self.layers).enumerate() {
            let got_shapes: Vec<&[usize]> = got.trainable().iter().map(|t| t.shape()).collect();
            let exp_shapes: Vec<&[usize]> = exp.iter().map(Vec::as_slice).collect();
            if got_shapes != exp_shapes {
                return Err(Error::invalid(format!(
                    "layer {i}: parameter shapes {got_shapes:?} do not match spec {exp_shapes:?}"
                )));
            }
        }
        Ok(())
    }
}

fn expected_shapes(spec: &ArchitectureSpec) -> Vec<Vec<Vec<usize>>> {
    spec.layers()
        .into_iter()
        .filter_map(|def| match def {
            LayerDef::FixedCombination { filters, .. } => Some(vec![vec![filters, spec.n_channels], vec![1]]),
            LayerDef::Conv {
                in_maps,
                out_maps,
                kernel,
            } => Some(vec![vec![out_maps, in_maps, kernel], vec![out_maps]]),
            LayerDef::Linear { inputs, outputs } => Some(vec![vec![outputs, inputs], vec![outputs]]),
            LayerDef::BatchNorm { maps } => Some(vec![vec![maps], vec![maps]]),
            _ => None,
        })
        .collect()
}

fn uniform<S: Scalar>(rng: &mut crate::rng::Rng, shape: &[usize], bound: f64) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.random_range(-bound..=bound))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Kaiming-uniform initialisation: weights on `±sqrt(6/fan_in)`, biases on
/// `±1/sqrt(fan_in)`, batchnorm scale 1 and shift 0.
pub fn build<S: Scalar>(spec: &ArchitectureSpec, seed: u64) -> Result<ModelParams<S>> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::Init);
    let mut layers = Vec::new();
    for def in spec.layers() {
        let layer = match def {
            LayerDef::FixedCombination { filters, .. } => {
                let fan_in = (filters * spec.n_channels) as f64;
                LayerParams::Combination {
                    omega: uniform(&mut rng, &[filters, spec.n_channels], (6.0 / fan_in).sqrt()),
                    b: uniform(&mut rng, &[1], 1.0 / fan_in.sqrt()),
                }
            }
            LayerDef::Conv {
                in_maps,
                out_maps,
                kernel,
            } => {
                let fan_in = (in_maps * kernel) as f64;
                LayerParams::Conv {
                    w: uniform(&mut rng, &[out_maps, in_maps, kernel], (6.0 / fan_in).sqrt()),
                    b: uniform(&mut rng, &[out_maps], 1.0 / fan_in.sqrt()),
                }
            }
            LayerDef::Linear { inputs, outputs } => {
                let fan_in = inputs as f64;
                LayerParams::Linear {
                    w: uniform(&mut rng, &[outputs, inputs], (6.0 / fan_in).sqrt()),
                    b: uniform(&mut rng, &[outputs], 1.0 / fan_in.sqrt()),
                }
            }
            LayerDef::BatchNorm { maps } => LayerParams::BatchNorm {
                gamma: Tensor::full(&[maps], S::one()),
                beta: Tensor::zeros(&[maps]),
                running: RunningStats::init(maps),
            },
            LayerDef::Relu | LayerDef::MaxPool { .. } | LayerDef::Flatten => continue,
        };
        layers.push(layer);
    }
    Ok(ModelParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn deterministic_and_seed_dependent() {
        let spec = ArchitectureSpec::new(ModelKind::OneHidReLU, 4, 16).with_hidden_maps(5);
        let a = build::<f64>(&spec, 11).unwrap();
        let b = build::<f64>(&spec, 11).unwrap();
        let c = build::<f64>(&spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check_against(&spec).unwrap();
    }

    #[test]
    fn kaiming_bounds_hold() {
        let spec = ArchitectureSpec::vgg(ModelKind::VGG13BN, 3).with_width(1.0 / 32.0, 16);
        let params = build::<f64>(&spec, 3).unwrap();
        let defs: Vec<_> = spec.layers().into_iter().filter(|d| d.has_params()).collect();
        for (def, layer) in defs.iter().zip(&params.layers) {
            match (def, layer) {
                (LayerDef::Conv { in_maps, kernel, .. }, LayerParams::Conv { w, b }) => {
                    let fan = (in_maps * kernel) as f64;
                    assert!(w.max_abs() <= (6.0 / fan).sqrt());
                    assert!(b.max_abs() <= 1.0 / fan.sqrt());
                }
                (LayerDef::Linear { inputs, .. }, LayerParams::Linear { w, .. }) => {
                    assert!(w.max_abs() <= (6.0 / *inputs as f64).sqrt());
                }
                (LayerDef::BatchNorm { .. }, LayerParams::BatchNorm { gamma, beta, .. }) => {
                    assert!(gamma.data().iter().all(|&g| g == 1.0));
                    assert!(beta.data().iter().all(|&g| g == 0.0));
                }
                other => panic!("unexpected pairing {other:?}"),
            }
        }
    }
}
