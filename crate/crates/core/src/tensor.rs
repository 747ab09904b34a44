//! Dense f32 kernels used by the forward pass.
//!
//! Dot products accumulate in f64 and are rounded once on store.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Row-major matrix of f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!("row {i} has {} values, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f32]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::Shape(format!(
                "bias of length {} for {} columns",
                bias.len(),
                self.cols
            )));
        }
        for r in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in r.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor2D) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} to {:?}",
                other.shape(),
                self.shape()
            )));
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        Ok(())
    }
}

/// `a · b`.
pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    // Rows are processed in blocks so each row of `b` is streamed once per
    // block; every output still sums over `p` in ascending order.
    const BLOCK: usize = 8;
    let mut out = Vec::with_capacity(n * m);
    let mut acc = vec![0.0f64; BLOCK * m];
    for i0 in (0..n).step_by(BLOCK) {
        let rows = BLOCK.min(n - i0);
        acc[..rows * m].iter_mut().for_each(|v| *v = 0.0);
        for p in 0..k {
            let brow = &b.data[p * m..(p + 1) * m];
            for r in 0..rows {
                let av = a.data[(i0 + r) * k + p];
                if av == 0.0 {
                    continue;
                }
                let av = av as f64;
                for (s, &bv) in acc[r * m..(r + 1) * m].iter_mut().zip(brow) {
                    *s += av * bv as f64;
                }
            }
        }
        out.extend(acc[..rows * m].iter().map(|&v| v as f32));
    }
    Ok(Tensor2D { rows: n, cols: m, data: out })
}

/// `a · bᵀ`; used for tied-embedding logits where `b` is stored `[vocab, d]`.
pub fn matmul_transposed(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "matmul_transposed {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(a.rows * b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        out.extend((0..b.rows).map(|j| dot(arow, b.row(j)) as f32));
    }
    Ok(Tensor2D { rows: a.rows, cols: b.rows, data: out })
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Normalizes `x` to zero mean and unit (1/N) variance, then applies gain and bias.
pub fn layer_norm(x: &[f32], gain: &[f32], bias: &[f32], eps: f32) -> Result<Vec<f32>> {
    let mut out = x.to_vec();
    layer_norm_in_place(&mut out, gain, bias, eps)?;
    Ok(out)
}

pub fn layer_norm_in_place(x: &mut [f32], gain: &[f32], bias: &[f32], eps: f32) -> Result<()> {
    if x.len() != gain.len() || x.len() != bias.len() {
        return Err(Error::Shape(format!(
            "layer_norm lengths x={} gain={} bias={}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Shape("layer_norm of empty vector".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
    let inv = 1.0 / libm::sqrt(var + eps as f64);
    for ((v, &g), &b) in x.iter_mut().zip(gain).zip(bias) {
        *v = ((*v as f64 - mean) * inv * g as f64 + b as f64) as f32;
    }
    Ok(())
}

/// Row-wise layer norm of a matrix.
pub fn layer_norm_rows(x: &Tensor2D, gain: &[f32], bias: &[f32]) -> Result<Tensor2D> {
    let mut out = x.clone();
    for r in out.data.chunks_exact_mut(x.cols) {
        layer_norm_in_place(r, gain, bias, LAYER_NORM_EPS)?;
    }
    Ok(out)
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
pub fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::tanh(GELU_SCALE * (x + 0.044715 * x * x * x)))) as f32
}

/// Tanh-approximation GELU.
pub fn gelu(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| gelu_scalar(v)).collect()
}

pub fn gelu_in_place(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = gelu_scalar(*v));
}

pub fn softmax(x: &[f32]) -> Result<Vec<f32>> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn softmax_in_place(x: &mut [f32]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Shape("softmax of empty vector".into()));
    }
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    let exps: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e = libm::exp((v - max) as f64);
            sum += e;
            e
        })
        .collect();
    for (v, e) in x.iter_mut().zip(exps) {
        *v = (e / sum) as f32;
    }
    Ok(())
}

/// Natural-log softmax in f64, used for scoring continuations.
pub fn log_softmax(x: &[f32]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Shape("log_softmax of empty vector".into()));
    }
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = libm::log(x.iter().map(|&v| libm::exp(v as f64 - max)).sum::<f64>()) + max;
    Ok(x.iter().map(|&v| v as f64 - lse).collect())
}
