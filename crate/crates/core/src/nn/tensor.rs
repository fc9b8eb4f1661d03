use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid("tensor dimensions must be positive"));
        }
        check_dim("tensor data", shape.iter().product(), data.len())?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of the trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Side-by-side concatenation of two matrices with the same row count.
    pub fn hconcat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        check_dim("concat rows", a.rows(), b.rows())?;
        let (ca, cb) = (a.cols(), b.cols());
        let mut data = Vec::with_capacity(a.rows() * (ca + cb));
        for i in 0..a.rows() {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Tensor::matrix(a.rows(), ca + cb, data)
    }

    /// Inverse of [`Tensor::hconcat`]: the first `left` columns and the rest.
    pub fn hsplit(&self, left: usize) -> Result<(Tensor, Tensor)> {
        let c = self.cols();
        if left == 0 || left >= c {
            return Err(invalid("split point must fall inside the matrix"));
        }
        let mut a = Vec::with_capacity(self.rows() * left);
        let mut b = Vec::with_capacity(self.rows() * (c - left));
        for i in 0..self.rows() {
            let (l, r) = self.row(i).split_at(left);
            a.extend_from_slice(l);
            b.extend_from_slice(r);
        }
        Ok((
            Tensor::matrix(self.rows(), left, a)?,
            Tensor::matrix(self.rows(), c - left, b)?,
        ))
    }
}
