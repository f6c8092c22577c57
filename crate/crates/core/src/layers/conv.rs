//! Valid-mode multi-channel discrete correlation and its adjoint.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Saved forward state of [`correlate`].
#[derive(Clone, Debug)]
pub struct CorrelateCache<S> {
    input: Tensor<S>,
    weight_shape: [usize; 3],
    stride: usize,
    out_shape: Vec<usize>,
}

impl<S: Scalar> CorrelateCache<S> {
    pub fn input(&self) -> &Tensor<S> {
        &self.input
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
}

/// Parameter and input gradients of one correlation layer.
#[derive(Clone, Debug)]
pub struct CorrelateGrads<S> {
    /// `None` when the caller asked to skip the input gradient.
    pub x: Option<Tensor<S>>,
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

/// Output length of a valid correlation.
pub fn correlate_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (stride >= 1 && kernel >= 1 && len >= kernel).then(|| (len - kernel) / stride + 1)
}

/// `out[i][t] = b[i] + sum_j sum_k w[i][j][k] * x[j][t*stride + k]`.
///
/// `x` is `[Pin x L]` or a batch `[B x Pin x L]`; the output has the same rank.
/// Filters are not flipped and there is no padding.
pub fn correlate<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
) -> Result<(Tensor<S>, CorrelateCache<S>)> {
    const OP: &str = "correlate";
    if w.rank() != 3 {
        return Err(Error::shape(OP, "weight rank", 3, w.rank()));
    }
    let (pout, pin, d) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if b.rank() != 1 || b.len() != pout {
        return Err(Error::shape(OP, "bias (output maps)", pout, b.len()));
    }
    let (batch, xin, len) = match x.shape() {
        [p, l] => (1, *p, *l),
        [n, p, l] => (*n, *p, *l),
        _ => return Err(Error::invalid(format!("{OP}: input must have rank 2 or 3, got {}", x.rank()))),
    };
    if xin != pin {
        return Err(Error::shape(OP, "input maps", pin, xin));
    }
    if stride == 0 {
        return Err(Error::invalid(format!("{OP}: stride must be positive")));
    }
    let lout = correlate_len(len, d, stride).ok_or_else(|| Error::shape(OP, "length (L >= d)", d, len))?;

    let mut out = vec![S::zero(); batch * pout * lout];
    let xd = x.data();
    let wd = w.data();
    for n in 0..batch {
        let xs = &xd[n * pin * len..(n + 1) * pin * len];
        for i in 0..pout {
            let orow = &mut out[(n * pout + i) * lout..(n * pout + i + 1) * lout];
            orow.iter_mut().for_each(|o| *o = b.data()[i]);
            for j in 0..pin {
                let xrow = &xs[j * len..(j + 1) * len];
                let wrow = &wd[(i * pin + j) * d..(i * pin + j + 1) * d];
                accumulate_row(orow, xrow, wrow, stride);
            }
        }
    }

    let out_shape = if x.rank() == 2 {
        vec![pout, lout]
    } else {
        vec![batch, pout, lout]
    };
    let cache = CorrelateCache {
        input: x.clone(),
        weight_shape: [pout, pin, d],
        stride,
        out_shape: out_shape.clone(),
    };
    Ok((Tensor::from_parts(out_shape, out), cache))
}

#[inline]
fn accumulate_row<S: Scalar>(out: &mut [S], x: &[S], w: &[S], stride: usize) {
    let lout = out.len();
    if stride == 1 && lout > w.len() {
        for (k, &wk) in w.iter().enumerate() {
            for (o, &xv) in out.iter_mut().zip(&x[k..k + lout]) {
                *o += wk * xv;
            }
        }
    } else {
        for (t, o) in out.iter_mut().enumerate() {
            let seg = &x[t * stride..t * stride + w.len()];
            *o += dot(seg, w);
        }
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Exact adjoint of [`correlate`], including the input gradient.
pub fn correlate_vjp<S: Scalar>(
    cache: &CorrelateCache<S>,
    w: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<CorrelateGrads<S>> {
    correlate_vjp_with(cache, w, grad_out, true)
}

/// Adjoint of [`correlate`]; skips the input gradient when `want_input_grad` is false.
pub fn correlate_vjp_with<S: Scalar>(
    cache: &CorrelateCache<S>,
    w: &Tensor<S>,
    grad_out: &Tensor<S>,
    want_input_grad: bool,
) -> Result<CorrelateGrads<S>> {
    const OP: &str = "correlate_vjp";
    if w.shape() != cache.weight_shape {
        return Err(Error::Cache {
            op: OP,
            detail: format!("weight shape {:?} differs from cached {:?}", w.shape(), cache.weight_shape),
        });
    }
    if grad_out.shape() != cache.out_shape.as_slice() {
        return Err(Error::Cache {
            op: OP,
            detail: format!(
                "grad_out shape {:?} differs from forward output {:?}",
                grad_out.shape(),
                cache.out_shape
            ),
        });
    }
    let [pout, pin, d] = cache.weight_shape;
    let x = &cache.input;
    let (batch, len) = match x.shape() {
        [_, l] => (1, *l),
        [n, _, l] => (*n, *l),
        _ => unreachable!(),
    };
    let lout = *cache.out_shape.last().unwrap();
    let s = cache.stride;

    let mut gw = vec![S::zero(); pout * pin * d];
    let mut gb = vec![S::zero(); pout];
    let mut gx = want_input_grad.then(|| vec![S::zero(); x.len()]);
    let xd = x.data();
    let wd = w.data();
    let gd = grad_out.data();

    for n in 0..batch {
        let xs = &xd[n * pin * len..(n + 1) * pin * len];
        for i in 0..pout {
            let grow = &gd[(n * pout + i) * lout..(n * pout + i + 1) * lout];
            gb[i] += grow.iter().copied().sum::<S>();
            for j in 0..pin {
                let xrow = &xs[j * len..(j + 1) * len];
                let widx = (i * pin + j) * d;
                let gwrow = &mut gw[widx..widx + d];
                if s == 1 && lout > d {
                    for (k, gwk) in gwrow.iter_mut().enumerate() {
                        *gwk += dot(grow, &xrow[k..k + lout]);
                    }
                } else {
                    for (t, &g) in grow.iter().enumerate() {
                        if g == S::zero() {
                            continue;
                        }
                        for (gwk, &xv) in gwrow.iter_mut().zip(&xrow[t * s..t * s + d]) {
                            *gwk += g * xv;
                        }
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    let off = n * pin * len + j * len;
                    let gxrow = &mut gx[off..off + len];
                    let wrow = &wd[widx..widx + d];
                    for (t, &g) in grow.iter().enumerate() {
                        if g == S::zero() {
                            continue;
                        }
                        for (gxv, &wk) in gxrow[t * s..t * s + d].iter_mut().zip(wrow) {
                            *gxv += g * wk;
                        }
                    }
                }
            }
        }
    }

    Ok(CorrelateGrads {
        x: gx.map(|v| Tensor::from_parts(x.shape().to_vec(), v)),
        w: Tensor::from_parts(vec![pout, pin, d], gw),
        b: Tensor::from_parts(vec![pout], gb),
    })
}
