//! Dense row-major tensor with up to three axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense, row-major array of scalars.
///
/// Shapes are `[n]`, `[maps, length]` or `[batch, maps, length]`. Every
/// extent is positive and `shape.iter().product() == data.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

pub const MAX_RANK: usize = 3;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::invalid(format!(
            "tensor rank must be 1..={MAX_RANK}, got {}",
            shape.len()
        )));
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(Error::invalid(format!("tensor axis {axis} has zero extent")));
    }
    Ok(shape.iter().product())
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor from trusted internal data. Panics on inconsistent shape.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// Builds a tensor from external data, rejecting bad shapes and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::shape("Tensor::new", "data length", n, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        assert!(!data.is_empty(), "empty tensor");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// `[rows x cols]` tensor from nested rows.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
            return Err(Error::shape("Tensor::from_rows", format!("row {i}"), c, row.len()));
        }
        Self::new(vec![r, c], rows.concat())
    }

    /// `[a x b x c]` tensor from triply nested data.
    pub fn from_nested(blocks: &[Vec<Vec<S>>]) -> Result<Self> {
        let a = blocks.len();
        let b = blocks.first().map_or(0, Vec::len);
        let c = blocks.first().and_then(|x| x.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(a * b * c);
        for (i, block) in blocks.iter().enumerate() {
            if block.len() != b {
                return Err(Error::shape("Tensor::from_nested", format!("block {i}"), b, block.len()));
            }
            for (j, row) in block.iter().enumerate() {
                if row.len() != c {
                    return Err(Error::shape("Tensor::from_nested", format!("row {i},{j}"), c, row.len()));
                }
                data.extend_from_slice(row);
            }
        }
        Self::new(vec![a, b, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::shape("Tensor::reshape", "element count", self.data.len(), n));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Contiguous slice of the leading-axis entry `i`.
    pub fn outer(&self, i: usize) -> &[S] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn outer_mut(&mut self, i: usize) -> &mut [S] {
        let stride = self.data.len() / self.shape[0];
        &mut self.data[i * stride..(i + 1) * stride]
    }

    /// Row `j` of entry `i` for a rank-3 tensor, or row `i` of a rank-2 tensor.
    pub fn row(&self, idx: &[usize]) -> &[S] {
        let last = *self.shape.last().unwrap();
        let off = self.offset_of_row(idx);
        &self.data[off..off + last]
    }

    pub fn row_mut(&mut self, idx: &[usize]) -> &mut [S] {
        let last = *self.shape.last().unwrap();
        let off = self.offset_of_row(idx);
        &mut self.data[off..off + last]
    }

    fn offset_of_row(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len() + 1, self.shape.len());
        let mut off = 0;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[k]);
            off = off * self.shape[k] + i;
        }
        off * self.shape.last().unwrap()
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let i = self.flat_index(idx);
        self.data[i] = v;
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of bounds for extent {n}");
            acc * n + i
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: S, other: &Self) {
        assert_eq!(self.shape, other.shape, "axpy shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-type conversion.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::of(v.f64())).collect(),
        }
    }

    /// Gathers leading-axis entries into a new tensor of the same rank.
    pub fn gather(&self, indices: &[usize]) -> Self {
        assert!(!indices.is_empty(), "gather of zero entries");
        let stride = self.data.len() / self.shape[0];
        let mut data = Vec::with_capacity(stride * indices.len());
        for &i in indices {
            data.extend_from_slice(self.outer(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        debug_assert_eq!(data.len(), stride * indices.len());
        Tensor { shape, data }
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<S>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack of zero tensors"))?;
        if first.rank() >= MAX_RANK {
            return Err(Error::invalid("stack would exceed maximum rank"));
        }
        let mut data = Vec::with_capacity(first.len() * items.len());
        for (i, t) in items.iter().enumerate() {
            if t.shape != first.shape {
                return Err(Error::shape("Tensor::stack", format!("item {i}"), first.len(), t.len()));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(Tensor::<f64>::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::<f64>::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
        assert!(Tensor::<f64>::new(vec![3], vec![1.0, 2.0]).is_err());
        assert!(Tensor::<f64>::new(vec![0], vec![]).is_err());
        assert!(Tensor::<f64>::new(vec![1, 1, 1, 1], vec![1.0]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::<f64>::from_nested(&[
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![5.0, 6.0], vec![7.0, 8.0]],
        ])
        .unwrap();
        assert_eq!(t.shape(), &[2, 2, 2]);
        assert_eq!(t.get(&[1, 0, 1]), 6.0);
        assert_eq!(t.row(&[1, 1]), &[7.0, 8.0]);
        assert_eq!(t.outer(0), &[1.0, 2.0, 3.0, 4.0]);
        let g = t.gather(&[1, 1]);
        assert_eq!(g.shape(), &[2, 2, 2]);
        assert_eq!(g.outer(1), t.outer(1));
    }
}
