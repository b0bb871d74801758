//! Dense row-major tensors.
//!
//! Everything the policy network needs is rank-1 or rank-2; shapes are kept as
//! a dim list but the op set enforces 2-D usage.

use crate::scalar::Scalar;

use super::GradError;

/// Dense tensor, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, GradError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.is_empty() || shape.contains(&0) {
            return Err(GradError::BadShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize, v: S) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![v; rows * cols],
        }
    }

    /// 1 x n row vector.
    pub fn row(data: Vec<S>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    /// 1 x 1 scalar tensor.
    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self, GradError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(GradError::BadShape {
                    shape: vec![r, row.len()],
                    len: c,
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    /// Single element of a 1 x 1 tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.numel(), 1, "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise accumulate: self += other.
    pub fn add_assign(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Lossy elementwise cast between scalar types.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| T::from_f64(Scalar::to_f64(v)))
                .collect(),
        }
    }
}

/// Plain triple-loop matmul: a (r x k) * b (k x c).
pub(crate) fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (r, k, c) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let brow = &b.data[p * c..(p + 1) * c];
            let orow = &mut out.data[i * c..(i + 1) * c];
            for j in 0..c {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

/// a (r x k) * b^T where b is (c x k).
pub(crate) fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (r, k, c) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(k, b.cols());
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..c {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut s = S::zero();
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out.data[i * c + j] = s;
        }
    }
    out
}

/// a^T (k x r) * b (r x c) without materializing the transpose.
pub(crate) fn matmul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (r, k, c) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(r, b.rows());
    let mut out = Tensor::zeros(k, c);
    for i in 0..r {
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let brow = &b.data[i * c..(i + 1) * c];
            let orow = &mut out.data[p * c..(p + 1) * c];
            for j in 0..c {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}
