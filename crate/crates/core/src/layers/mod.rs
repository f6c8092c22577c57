//! Differentiable layer primitives with hand-written vector-Jacobian products.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod loss;
mod pool;

pub use activation::{relu, relu_vjp, sigmoid, sigmoid_tensor, softplus, ReluCache};
pub use batchnorm::{
    batchnorm_forward, batchnorm_vjp, BatchNormCache, BatchNormGrads, BatchNormOutput, Mode, RunningStats,
    BN_EPS, BN_MOMENTUM,
};
pub use conv::{correlate, correlate_len, correlate_vjp, correlate_vjp_with, CorrelateCache, CorrelateGrads};
pub use linear::{linear_forward, linear_vjp, LinearCache, LinearGrads};
pub use loss::{bce_grad, bce_loss, bce_mean, Label};
pub use pool::{maxpool, maxpool_vjp, MaxPoolCache};

/// Forward state saved by one layer for its backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache<S> {
    Correlate(CorrelateCache<S>),
    Relu(ReluCache),
    MaxPool(MaxPoolCache),
    BatchNorm(BatchNormCache<S>),
    Linear(LinearCache<S>),
}
