//! Dense row-major tensors and the batching used by the stochastic solver.
//!
//! Layout is row-major with the last index fastest. Mode-`m` unfolding lists the
//! remaining modes in their original order, again row-major, so that for a
//! Kruskal tensor `unfold(⟦F0,..,Fd⟧, m) = Fm · KR(others in order)ᵀ` where the
//! Khatri-Rao product keeps its first factor slowest (see `kernels::khatri_rao`).

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{invalid, AtdError, Result};
use crate::rng;

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor, rejecting empty shapes, zero extents, length mismatch
    /// and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if data.len() != len {
            return Err(AtdError::Shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                len
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AtdError::NonFinite(format!("tensor element {pos}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Fills a tensor from a function of the multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = checked_len(&shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self::new(shape, data)
    }

    /// Internal constructor for kernel outputs that are finite by construction.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let off = idx.iter().zip(self.strides()).map(|(&i, s)| i * s).sum::<usize>();
        self.data[off]
    }

    /// Number of elements in one slice along the first mode.
    pub fn slab_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// The `n`-th slice along the first mode, as a flat row-major slice.
    pub fn slab(&self, n: usize) -> &[f64] {
        let w = self.slab_len();
        &self.data[n * w..(n + 1) * w]
    }

    /// Sum of squared entries.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Mode-`mode` unfolding (0-based), shape `(extent(mode), ∏ others)`.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        if mode >= self.order() {
            return Err(invalid(
                "mode",
                format!("{mode} out of range for order {}", self.order()),
            ));
        }
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        let strides = self.strides();
        let mut out = Matrix::zeros((rows, cols));
        let mut idx = vec![0usize; self.order()];
        for (flat, &v) in self.data.iter().enumerate() {
            let col = column_index(&idx, &self.shape, mode);
            out[[idx[mode], col]] = v;
            debug_assert_eq!(flat, idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>());
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        if mode >= shape.len() {
            return Err(invalid("mode", format!("{mode} out of range")));
        }
        if m.nrows() != shape[mode] || m.nrows() * m.ncols() != len {
            return Err(AtdError::Shape(format!(
                "matrix {:?} cannot fold into {:?} along mode {mode}",
                m.dim(),
                shape
            )));
        }
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(m[[idx[mode], column_index(&idx, shape, mode)]]);
            increment(&mut idx, shape);
        }
        Self::new(shape.to_vec(), data)
    }

    /// Gathers first-mode slices in the given order.
    pub fn select_slabs(&self, rows: &[usize]) -> Result<Self> {
        let n = self.shape[0];
        if rows.is_empty() {
            return Err(invalid("rows", "empty selection"));
        }
        let w = self.slab_len();
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            if r >= n {
                return Err(invalid("rows", format!("index {r} out of range {n}")));
            }
            data.extend_from_slice(self.slab(r));
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Self { shape, data })
    }

    /// `self ← w·self + (1−w)·other`.
    pub fn blend_from(&mut self, w: f64, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(AtdError::Shape(format!(
                "cannot blend {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = w * *a + (1.0 - w) * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(AtdError::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape, self.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts_unchecked(self.shape.clone(), data))
    }

    pub fn scaled(&self, s: f64) -> Result<DenseTensor> {
        Self::new(self.shape.clone(), self.data.iter().map(|v| v * s).collect())
    }

    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }
}

pub(crate) fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(invalid("shape", "order must be at least 1"));
    }
    if let Some(m) = shape.iter().position(|&e| e == 0) {
        return Err(invalid("shape", format!("extent of mode {m} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| invalid("shape", format!("{shape:?} overflows the address space")))
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for m in (0..shape.len().saturating_sub(1)).rev() {
        strides[m] = strides[m + 1] * shape[m + 1];
    }
    strides
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for m in (0..shape.len()).rev() {
        idx[m] += 1;
        if idx[m] < shape[m] {
            return;
        }
        idx[m] = 0;
    }
}

fn column_index(idx: &[usize], shape: &[usize], mode: usize) -> usize {
    let mut col = 0;
    for (m, (&i, &e)) in idx.iter().zip(shape).enumerate() {
        if m != mode {
            col = col * e + i;
        }
    }
    col
}

/// A materialized subset of first-mode slices.
#[derive(Debug, Clone)]
pub struct TensorBatch {
    pub indices: Vec<usize>,
    pub tensor: DenseTensor,
}

impl TensorBatch {
    pub fn from_parent(parent: &DenseTensor, indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; parent.shape()[0]];
        for &i in &indices {
            if i >= seen.len() {
                return Err(invalid("indices", format!("{i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid("indices", format!("{i} repeated")));
            }
        }
        let tensor = parent.select_slabs(&indices)?;
        Ok(Self { indices, tensor })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// How sample order is drawn before batching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shuffle {
    Seeded(u64),
    /// Keeps `0..N`; used by tests and by the full-batch ALS comparison.
    Identity,
}

/// Partitions `0..n` into consecutive chunks of `b` after shuffling. The last
/// chunk may be short.
pub fn batch_plan(n: usize, b: usize, shuffle: Shuffle) -> Result<Vec<Vec<usize>>> {
    if b == 0 {
        return Err(invalid("b", "batch size must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "no samples to batch"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Shuffle::Seeded(seed) = shuffle {
        order.shuffle(&mut rng::stream(seed, &[rng::TAG_SHUFFLE]));
    }
    Ok(order.chunks(b).map(|c| c.to_vec()).collect())
}

/// Shuffles the first mode of `t` and materializes `⌈N/b⌉` batches.
pub fn split_batches(t: &DenseTensor, b: usize, shuffle: Shuffle) -> Result<Vec<TensorBatch>> {
    batch_plan(t.shape()[0], b, shuffle)?
        .into_iter()
        .map(|idx| TensorBatch::from_parent(t, idx))
        .collect()
}
