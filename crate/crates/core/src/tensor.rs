//! Dense row-major `f32` tensors and the elementary kernels built on them.
//!
//! All kernels accumulate in a fixed order so results are bit-reproducible;
//! transcendental functions go through `libm` rather than the platform libm.

use half::f16;
use num_traits::Float;

use crate::error::{Error, Result};

/// Largest finite binary16 magnitude.
pub const F16_MAX: f32 = 65504.0;

/// Floating point element usable by the generic kernels.
///
/// The network runs in `f32`; `f64` instantiations exist for numerical
/// gradient checking.
pub trait Real: Float + Default + std::fmt::Debug + std::iter::Sum + 'static {
    fn exp_(self) -> Self;
    fn ln_(self) -> Self;
    fn from_f32(v: f32) -> Self;
    fn to_f32(self) -> f32;
    fn from_usize(v: usize) -> Self;
}

impl Real for f32 {
    fn exp_(self) -> Self {
        libm::expf(self)
    }
    fn ln_(self) -> Self {
        libm::logf(self)
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn to_f32(self) -> f32 {
        self
    }
    fn from_usize(v: usize) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn exp_(self) -> Self {
        libm::exp(self)
    }
    fn ln_(self) -> Self {
        libm::log(self)
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn from_usize(v: usize) -> Self {
        v as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::Dimension {
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                left: vec![cols],
                right: vec![bad.len()],
            });
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent for 2-D tensors, 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    fn expect_2d(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            other => Err(Error::Dimension {
                left: other.to_vec(),
                right: vec![0, 0],
            }),
        }
    }
}

/// `c[i][j] = Σ_t a[i][t]·b[t][j]`, summed in increasing `t`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_2d()?;
    let (k2, n) = b.expect_2d()?;
    if k != k2 {
        return Err(Error::Dimension {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: gemm_nn(&a.data, &b.data, m, k, n),
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.expect_2d()?;
    if n == 0 {
        return Err(Error::parameter("softmax over an empty row"));
    }
    let mut out = x.data.clone();
    for r in 0..m {
        softmax_in_place(&mut out[r * n..(r + 1) * n]);
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: out,
    })
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp_();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

pub(crate) const CE_EPSILON: f64 = 1e-12;

/// Mean negative log-likelihood of `labels` under row distributions `probs`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f32> {
    let (m, n) = probs.expect_2d()?;
    if labels.len() != m {
        return Err(Error::Dimension {
            left: vec![m],
            right: vec![labels.len()],
        });
    }
    mean_nll(&probs.data, labels, n)
}

pub(crate) fn mean_nll<T: Real>(probs: &[T], labels: &[usize], n: usize) -> Result<T> {
    let eps = T::from(CE_EPSILON).unwrap();
    let mut total = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label >= n {
            return Err(Error::Index { index: label, limit: n });
        }
        total = total - (probs[i * n + label] + eps).ln_();
    }
    Ok(if labels.is_empty() {
        T::zero()
    } else {
        total / T::from_usize(labels.len())
    })
}

/// Rounds a single value to the nearest binary16 value (ties to even).
pub fn f16_round_value(x: f32) -> Result<f32> {
    f16_bits(x).map(|b| f16::from_bits(b).to_f32())
}

/// Binary16 bit pattern nearest to `x`.
pub fn f16_bits(x: f32) -> Result<u16> {
    if !x.is_finite() || x.abs() > F16_MAX {
        return Err(Error::Overflow(x));
    }
    Ok(f16::from_f32(x).to_bits())
}

pub fn f16_round(x: &Tensor) -> Result<Tensor> {
    let data = x.data.iter().map(|&v| f16_round_value(v)).collect::<Result<_>>()?;
    Ok(Tensor {
        shape: x.shape.clone(),
        data,
    })
}

/// `a[m×k] · b[k×n]`.
pub(crate) fn gemm_nn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, out) in c_row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for t in 0..k {
                acc = acc + a_row[t] * b[t * n + j];
            }
            *out = acc;
        }
    }
    c
}

/// `a[m×k] · b[n×k]ᵀ`.
pub(crate) fn gemm_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for t in 0..k {
                acc = acc + a_row[t] * b_row[t];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// `a[m×k]ᵀ · b[m×n]`, giving `k×n`.
pub(crate) fn gemm_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for r in 0..m {
        let a_row = &a[r * k..(r + 1) * k];
        let b_row = &b[r * n..(r + 1) * n];
        for (t, &av) in a_row.iter().enumerate() {
            let c_row = &mut c[t * n..(t + 1) * n];
            for (out, &bv) in c_row.iter_mut().zip(b_row) {
                *out = *out + av * bv;
            }
        }
    }
    c
}
