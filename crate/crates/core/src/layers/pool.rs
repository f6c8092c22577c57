use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Argmax positions recorded by [`maxpool`].
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

/// Max pooling along the last axis. Trailing samples that do not fill a
/// window are dropped; ties resolve to the lowest index.
pub fn maxpool<S: Scalar>(x: &Tensor<S>, k: usize, s: usize) -> Result<(Tensor<S>, MaxPoolCache)> {
    if k == 0 || s == 0 {
        return Err(Error::invalid("maxpool kernel and stride must be positive"));
    }
    let len = *x.shape().last().unwrap();
    if len < k {
        return Err(Error::shape("maxpool", "length (L >= k)", k, len));
    }
    let lout = (len - k) / s + 1;
    let rows = x.len() / len;
    let mut out = Vec::with_capacity(rows * lout);
    let mut argmax = Vec::with_capacity(rows * lout);
    for r in 0..rows {
        let row = &x.data()[r * len..(r + 1) * len];
        for t in 0..lout {
            let mut best = t * s;
            for i in t * s + 1..t * s + k {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(r * len + best);
        }
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = lout;
    let cache = MaxPoolCache {
        argmax,
        in_shape: x.shape().to_vec(),
        out_shape: out_shape.clone(),
    };
    Ok((Tensor::from_parts(out_shape, out), cache))
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool_vjp<S: Scalar>(cache: &MaxPoolCache, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if grad_out.shape() != cache.out_shape.as_slice() {
        return Err(Error::Cache {
            op: "maxpool_vjp",
            detail: format!("grad_out {:?} vs forward {:?}", grad_out.shape(), cache.out_shape),
        });
    }
    let mut gx = vec![S::zero(); cache.in_shape.iter().product()];
    for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Ok(Tensor::from_parts(cache.in_shape.clone(), gx))
}
