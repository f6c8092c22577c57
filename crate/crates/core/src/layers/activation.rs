use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Records which inputs were strictly positive.
#[derive(Clone, Debug)]
pub struct ReluCache {
    active: Vec<bool>,
    shape: Vec<usize>,
}

impl ReluCache {
    /// Activity mask of the forward input, `true` where `x > 0`.
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
}

/// Elementwise `max(x, 0)`.
pub fn relu<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, ReluCache) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > S::zero()).collect();
    let y = x.map(|v| if v > S::zero() { v } else { S::zero() });
    (
        y,
        ReluCache {
            active,
            shape: x.shape().to_vec(),
        },
    )
}

/// Passes the gradient where the input was positive; the subgradient at 0 is 0.
pub fn relu_vjp<S: Scalar>(cache: &ReluCache, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::Cache {
            op: "relu_vjp",
            detail: format!("grad_out {:?} vs forward {:?}", grad_out.shape(), cache.shape),
        });
    }
    let data = grad_out
        .data()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &a)| if a { g } else { S::zero() })
        .collect();
    Ok(Tensor::from_parts(cache.shape.clone(), data))
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<S: Scalar>(u: S) -> S {
    if u >= S::zero() {
        S::one() / (S::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (S::one() + e)
    }
}

pub fn sigmoid_tensor<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(sigmoid)
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus<S: Scalar>(z: S) -> S {
    z.max(S::zero()) + (-z.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values_and_dead_region() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        let (y, c) = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_vjp(&c, &Tensor::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);

        let x = Tensor::from_vec(vec![-3.0, -0.5, -1e-9]);
        let (y, c) = relu(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = relu_vjp(&c, &Tensor::from_vec(vec![2.0, -1.0, 5.0])).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        for u in [-3.0f64, 1.0, 10.0] {
            assert!((sigmoid(u) - (1.0 - sigmoid(-u))).abs() < 1e-15);
        }
        assert!((sigmoid(2.0f64) - 0.880_797_077_977_882_3).abs() < 1e-15);
        for u in [-700.0f64, 700.0, -745.0, 745.0] {
            assert!(sigmoid(u).is_finite());
        }
        assert!(sigmoid(-700.0f64) > 0.0 && sigmoid(-700.0f64) < 1.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(1.0f64) - 1.313_261_687_518_222_8).abs() < 1e-14);
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
    }
}
