use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LinearCache<S> {
    input: Tensor<S>,
    weight_shape: [usize; 2],
}

pub struct LinearGrads<S> {
    pub x: Option<Tensor<S>>,
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

/// `y = W x + b` for `x: [n]` or a batch `x: [B x n]` (rows are samples).
pub fn linear_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Result<(Tensor<S>, LinearCache<S>)> {
    const OP: &str = "linear";
    let [m, n] = match w.shape() {
        [m, n] => [*m, *n],
        _ => return Err(Error::shape(OP, "weight rank", 2, w.rank())),
    };
    if b.len() != m || b.rank() != 1 {
        return Err(Error::shape(OP, "bias (outputs)", m, b.len()));
    }
    let (batch, xn) = match x.shape() {
        [k] => (1, *k),
        [bs, k] => (*bs, *k),
        _ => return Err(Error::shape(OP, "input rank", 2, x.rank())),
    };
    if xn != n {
        return Err(Error::shape(OP, "input features", n, xn));
    }
    let mut out = Vec::with_capacity(batch * m);
    for s in 0..batch {
        let xs = &x.data()[s * n..(s + 1) * n];
        for i in 0..m {
            let wr = &w.data()[i * n..(i + 1) * n];
            let mut acc = b.data()[i];
            for (&a, &c) in wr.iter().zip(xs) {
                acc += a * c;
            }
            out.push(acc);
        }
    }
    let shape = if x.rank() == 1 { vec![m] } else { vec![batch, m] };
    Ok((
        Tensor::from_parts(shape, out),
        LinearCache {
            input: x.clone(),
            weight_shape: [m, n],
        },
    ))
}

pub fn linear_vjp<S: Scalar>(
    cache: &LinearCache<S>,
    w: &Tensor<S>,
    grad_out: &Tensor<S>,
    want_input_grad: bool,
) -> Result<LinearGrads<S>> {
    let [m, n] = cache.weight_shape;
    let batch = cache.input.len() / n;
    if w.shape() != [m, n] {
        return Err(Error::Cache {
            op: "linear_vjp",
            detail: format!("weight {:?} vs cached [{m}, {n}]", w.shape()),
        });
    }
    if grad_out.len() != batch * m || grad_out.rank() != cache.input.rank() {
        return Err(Error::Cache {
            op: "linear_vjp",
            detail: format!("grad_out {:?} does not match forward output", grad_out.shape()),
        });
    }
    let mut gw = vec![S::zero(); m * n];
    let mut gb = vec![S::zero(); m];
    let mut gx = want_input_grad.then(|| vec![S::zero(); batch * n]);
    let g = grad_out.data();
    for s in 0..batch {
        let xs = &cache.input.data()[s * n..(s + 1) * n];
        for i in 0..m {
            let gi = g[s * m + i];
            if gi == S::zero() {
                continue;
            }
            gb[i] += gi;
            let wr = &w.data()[i * n..(i + 1) * n];
            for (gwv, &xv) in gw[i * n..(i + 1) * n].iter_mut().zip(xs) {
                *gwv += gi * xv;
            }
            if let Some(gx) = gx.as_mut() {
                for (gxv, &wv) in gx[s * n..(s + 1) * n].iter_mut().zip(wr) {
                    *gxv += gi * wv;
                }
            }
        }
    }
    Ok(LinearGrads {
        x: gx.map(|v| Tensor::from_parts(cache.input.shape().to_vec(), v)),
        w: Tensor::from_parts(vec![m, n], gw),
        b: Tensor::from_parts(vec![m], gb),
    })
}
