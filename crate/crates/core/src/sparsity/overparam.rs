//! Numerical checks that multiplying a filter by a scalar and putting plain
//! L2 penalties on both factors behaves like an L1 (sum-of-norms) penalty on
//! the product.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Brute-force `min_{xy=w} x^2/2 + y^2/2` over `x` on a uniform grid in
/// `[-halfwidth, halfwidth]`.
pub fn overparam_scalar_identity(w: f64, grid_halfwidth: f64, grid_step: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let n = (2.0 * grid_halfwidth / grid_step).round() as i64;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let x = -grid_halfwidth + i as f64 * grid_step;
        if x == 0.0 {
            continue;
        }
        let y = w / x;
        best = best.min(0.5 * x * x + 0.5 * y * y);
    }
    best
}

/// `f(v) = ||A v - c||^2 / 2` with `A` given by rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quadratic {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != c.len() {
            return Err(Error::shape("Quadratic", "rows of A vs c", c.len(), a.len()));
        }
        let d = a[0].len();
        if d == 0 || d > 4 {
            return Err(Error::invalid(format!("dimension must be in 1..=4, got {d}")));
        }
        if let Some(r) = a.iter().find(|r| r.len() != d) {
            return Err(Error::shape("Quadratic", "columns of A", d, r.len()));
        }
        if a.iter().flatten().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic coefficients".into()));
        }
        Ok(Quadratic { a, c })
    }

    pub fn dims(&self) -> usize {
        self.a[0].len()
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        self.a.iter().zip(&self.c).map(|(row, c)| dot(row, v) - c).collect()
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        0.5 * self.residual(v).iter().map(|r| r * r).sum::<f64>()
    }

    pub fn grad(&self, v: &[f64]) -> Vec<f64> {
        let r = self.residual(v);
        let mut g = vec![0.0; self.dims()];
        for (row, ri) in self.a.iter().zip(&r) {
            for (gj, aij) in g.iter_mut().zip(row) {
                *gj += aij * ri;
            }
        }
        g
    }

    fn gram(&self) -> Vec<Vec<f64>> {
        let d = self.dims();
        let mut m = vec![vec![0.0; d]; d];
        for row in &self.a {
            for i in 0..d {
                for j in 0..d {
                    m[i][j] += row[i] * row[j];
                }
            }
        }
        m
    }

    fn atc(&self) -> Vec<f64> {
        let mut g = self.grad(&vec![0.0; self.dims()]);
        g.iter_mut().for_each(|x| *x = -*x);
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cholesky solve of `m x = b` for symmetric positive definite `m`.
fn solve_spd(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                if v <= 0.0 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (y[i] - (i + 1..d).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Minimiser of `f(v) + gamma ||v||_2`.
///
/// Zero when `||A^T c|| <= gamma`; otherwise `v = (A^T A + (gamma/r) I)^{-1} A^T c`
/// with `r = ||v||` found by bisection.
pub fn sum_of_norms_minimiser(q: &Quadratic, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let atc = q.atc();
    if norm(&atc) <= gamma {
        return Ok(vec![0.0; q.dims()]);
    }
    let gram = q.gram();
    let v_at = |r: f64| -> Result<Vec<f64>> {
        let mut m = gram.clone();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += gamma / r;
        }
        solve_spd(&m, &atc).ok_or_else(|| Error::NoConvergence { residual: f64::NAN })
    };
    // ||v(r)|| - r is positive near 0 and negative for large r
    let mut lo = 0.0;
    let mut hi = 1.0;
    while norm(&v_at(hi)?) > hi {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence { residual: hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm(&v_at(mid)?) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v_at(0.5 * (lo + hi))
}

/// The balanced factorisation `v = beta * w` with `w = s v`, `s = ||v||^{-1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Split {
    pub beta: f64,
    pub w: Vec<f64>,
    /// `beta^2/2 + ||w||^2/2`.
    pub value: f64,
}

pub fn closed_form_split(v: &[f64]) -> Split {
    let n = norm(v);
    if n == 0.0 {
        return Split {
            beta: 0.0,
            w: vec![0.0; v.len()],
            value: 0.0,
        };
    }
    let s = n.powf(-0.5);
    let w: Vec<f64> = v.iter().map(|x| s * x).collect();
    let wn = norm(&w);
    let beta = n / wn;
    Split {
        value: 0.5 * beta * beta + 0.5 * wn * wn,
        beta,
        w,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OverparamOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when the extended gradient norm drops below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for OverparamOptions {
    fn default() -> Self {
        OverparamOptions {
            restarts: 8,
            max_iterations: 200_000,
            grad_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OverparamComparison {
    pub beta: f64,
    pub w: Vec<f64>,
    /// `beta * w` from the extended problem.
    pub product: Vec<f64>,
    pub extended_objective: f64,
    /// Minimiser of the sum-of-norms problem.
    pub v: Vec<f64>,
    pub sum_of_norms_objective: f64,
    /// Balanced split of `v`; its value should equal `||v||`.
    pub split: Split,
    pub grad_norm: f64,
}

impl OverparamComparison {
    pub fn product_gap(&self) -> f64 {
        let d: Vec<f64> = self.product.iter().zip(&self.v).map(|(a, b)| a - b).collect();
        norm(&d)
    }

    pub fn split_gap(&self) -> f64 {
        (self.split.value - norm(&self.v)).abs()
    }
}

fn extended(q: &Quadratic, gamma: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let d = q.dims();
    let (w, beta) = (&x[..d], x[d]);
    let v: Vec<f64> = w.iter().map(|wi| beta * wi).collect();
    let g = q.grad(&v);
    let value = q.value(&v) + 0.5 * gamma * (beta * beta + dot(w, w));
    let mut grad: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| beta * gi + gamma * wi).collect();
    grad.push(dot(w, &g) + gamma * beta);
    (value, grad)
}

/// Gradient descent with backtracking from `x0`; returns the end point, value and gradient norm.
fn descend(q: &Quadratic, gamma: f64, mut x: Vec<f64>, opts: &OverparamOptions) -> (Vec<f64>, f64, f64) {
    let (mut fx, mut g) = extended(q, gamma, &x);
    let mut step = 1.0;
    for _ in 0..opts.max_iterations {
        let gn2 = dot(&g, &g);
        if gn2.sqrt() < opts.grad_tol {
            break;
        }
        let mut accepted = false;
        while step > 1e-20 {
            let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let (fy, gy) = extended(q, gamma, &y);
            if fy <= fx - 0.5 * step * gn2 {
                x = y;
                fx = fy;
                g = gy;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    let gn = norm(&g);
    (x, fx, gn)
}

/// Solves the extended problem `min f(beta w) + gamma/2 (beta^2 + ||w||^2)` by
/// descent from the origin and several random starts, and the sum-of-norms
/// problem directly, and reports both.
pub fn overparam_vector_equivalence(q: &Quadratic, gamma: f64, opts: &OverparamOptions) -> Result<OverparamComparison> {
    let v = sum_of_norms_minimiser(q, gamma)?;
    let d = q.dims();
    let mut rng = stream(opts.seed, Stream::Init);
    let scale = 1.0 + norm(&v).sqrt();
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut best_residual = f64::INFINITY;
    for r in 0..=opts.restarts {
        let x0: Vec<f64> = if r == 0 {
            vec![0.0; d + 1]
        } else {
            (0..=d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let (x, fx, gn) = descend(q, gamma, x0, opts);
        best_residual = best_residual.min(gn);
        if gn > opts.grad_tol.max(1e-7) {
            continue;
        }
        if best.as_ref().is_none_or(|(_, bf, _)| fx < *bf) {
            best = Some((x, fx, gn));
        }
    }
    let Some((x, fx, gn)) = best else {
        return Err(Error::NoConvergence { residual: best_residual });
    };
    let beta = x[d];
    let w = x[..d].to_vec();
    Ok(OverparamComparison {
        product: w.iter().map(|wi| beta * wi).collect(),
        beta,
        w,
        extended_objective: fx,
        sum_of_norms_objective: q.value(&v) + gamma * norm(&v),
        split: closed_form_split(&v),
        v,
        grad_norm: gn,
    })
}
