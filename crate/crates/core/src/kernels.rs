//! Multilinear kernels shared by every closed-form update.
//!
//! Factor lists are always given in mode order. `khatri_rao` keeps the first
//! factor's row index slowest, matching the column order of
//! [`DenseTensor::unfold`].

use ndarray::{Array2, ArrayView2};

use crate::error::{AtdError, Result};
use crate::tensor::{strides_of, DenseTensor, Matrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

fn shared_rank(factors: &[&Matrix]) -> Result<usize> {
    let r = factors
        .first()
        .ok_or_else(|| AtdError::Shape("empty factor list".into()))?
        .ncols();
    if r == 0 {
        return Err(AtdError::Shape("rank must be at least 1".into()));
    }
    if let Some(f) = factors.iter().find(|f| f.ncols() != r) {
        return Err(AtdError::Shape(format!("rank mismatch: {} vs {}", f.ncols(), r)));
    }
    Ok(r)
}

/// Column-wise Kronecker product, shape `(∏ rows, R)`.
pub fn khatri_rao(factors: &[&Matrix]) -> Result<Matrix> {
    let r = shared_rank(factors)?;
    let mut out = Array2::<f64>::ones((1, r));
    for f in factors {
        let mut next = Array2::<f64>::zeros((out.nrows() * f.nrows(), r));
        for p in 0..out.nrows() {
            for q in 0..f.nrows() {
                let row = p * f.nrows() + q;
                for c in 0..r {
                    next[[row, c]] = out[[p, c]] * f[[q, c]];
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// `FᵀF`, accumulated on the upper triangle and mirrored so it is exactly
/// symmetric.
pub fn gram(f: &Matrix) -> Matrix {
    let r = f.ncols();
    let mut g = Matrix::zeros((r, r));
    for p in 0..r {
        for q in p..r {
            let s = f.column(p).dot(&f.column(q));
            g[[p, q]] = s;
            g[[q, p]] = s;
        }
    }
    g
}

/// Per-factor Gram matrices, their Hadamard product `Π`, and the ridge weight.
#[derive(Debug, Clone)]
pub struct GramStack {
    pub grams: Vec<Matrix>,
    pub hadamard: Matrix,
    pub alpha: f64,
}

impl GramStack {
    pub fn new(factors: &[&Matrix], alpha: f64) -> Result<Self> {
        let r = shared_rank(factors)?;
        let grams: Vec<Matrix> = factors.iter().map(|f| gram(f)).collect();
        let mut hadamard = Matrix::ones((r, r));
        for g in &grams {
            hadamard *= g;
        }
        Ok(Self { grams, hadamard, alpha })
    }

    /// Stack built from an already-formed Hadamard matrix.
    pub fn from_hadamard(hadamard: Matrix, alpha: f64) -> Self {
        Self {
            grams: Vec::new(),
            hadamard,
            alpha,
        }
    }

    pub fn rank(&self) -> usize {
        self.hadamard.nrows()
    }

    /// `Π + αI`.
    pub fn system(&self) -> Matrix {
        let mut s = self.hadamard.clone();
        for i in 0..s.nrows() {
            s[[i, i]] += self.alpha;
        }
        s
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(s: ArrayView2<'_, f64>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(AtdError::Shape(format!("system {:?} is not square", s.dim())));
        }
        let scale = (0..n).map(|i| s[[i, i]].abs()).fold(0.0, f64::max);
        let floor = scale * 1e-14 * n as f64;
        let mut l = Matrix::zeros((n, n));
        for j in 0..n {
            let mut d = s[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > floor) {
                return Err(AtdError::Singular { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in j + 1..n {
                let mut v = s[[i, j]];
                for k in 0..j {
                    v -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = v / d;
            }
        }
        Ok(Self { l })
    }

    /// Solves `S x = y` in place.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, y: &mut [f64]) {
        let n = self.l.nrows();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= self.l[[i, k]] * y[k];
            }
            y[i] = v / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in i + 1..n {
                v -= self.l[[k, i]] * y[k];
            }
            y[i] = v / self.l[[i, i]];
        }
    }
}

/// `rhs · (Π + αI)⁻¹` through a Cholesky factorization.
pub fn ridge_solve(rhs: &Matrix, gram: &GramStack) -> Result<Matrix> {
    if rhs.ncols() != gram.rank() {
        return Err(AtdError::Shape(format!(
            "rhs has {} columns, system has rank {}",
            rhs.ncols(),
            gram.rank()
        )));
    }
    let chol = Cholesky::factor(gram.system().view())?;
    let mut out = rhs.as_standard_layout().into_owned();
    let r = out.ncols();
    if let Some(data) = out.as_slice_mut() {
        for row in data.chunks_mut(r) {
            chol.solve_in_place(row);
        }
    }
    Ok(out)
}

/// Scratch accounting for one MTTKRP call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MttkrpStats {
    /// Scratch held by one worker (partial products plus the fiber accumulator).
    pub scratch_bytes: usize,
    pub output_bytes: usize,
}

struct MttkrpCtx<'a> {
    data: &'a [f64],
    strides: Vec<usize>,
    shape: &'a [usize],
    /// Non-target modes in increasing order, each with its factor rows.
    levels: Vec<(usize, &'a [f64])>,
    rank: usize,
}

impl MttkrpCtx<'_> {
    fn scratch_len(&self) -> usize {
        // one partial-product vector per level plus the fiber accumulator
        (self.levels.len() + 1) * self.rank
    }

    fn row(&self, target_stride: usize, row: usize, out: &mut [f64], scratch: &mut [f64]) {
        let r = self.rank;
        out.iter_mut().for_each(|v| *v = 0.0);
        let (ones, rest) = scratch.split_at_mut(r);
        ones.iter_mut().for_each(|v| *v = 1.0);
        self.descend(0, row * target_stride, ones, rest, out);
    }

    fn descend(&self, level: usize, offset: usize, partial: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let r = self.rank;
        let (mode, fac) = self.levels[level];
        let stride = self.strides[mode];
        let extent = self.shape[mode];
        if level + 1 == self.levels.len() {
            // fiber accumulation: Σ_i t[.., i] · F[i, :], then one Hadamard with the prefix
            let fiber = &mut scratch[..r];
            fiber.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..extent {
                let v = self.data[offset + i * stride];
                let frow = &fac[i * r..(i + 1) * r];
                for (acc, &f) in fiber.iter_mut().zip(frow) {
                    *acc += v * f;
                }
            }
            for ((o, &p), &f) in out.iter_mut().zip(partial).zip(fiber.iter()) {
                *o += p * f;
            }
            return;
        }
        let (cur, rest) = scratch.split_at_mut(r);
        for i in 0..extent {
            let frow = &fac[i * r..(i + 1) * r];
            for ((c, &p), &f) in cur.iter_mut().zip(partial).zip(frow) {
                *c = p * f;
            }
            self.descend(level + 1, offset + i * stride, cur, rest, out);
        }
    }
}

fn mttkrp_setup<'a>(t: &'a DenseTensor, factors: &'a [Matrix], target_mode: usize) -> Result<MttkrpCtx<'a>> {
    let order = t.order();
    if order < 2 {
        return Err(AtdError::Shape("MTTKRP needs a tensor of order ≥ 2".into()));
    }
    if target_mode >= order {
        return Err(AtdError::Shape(format!(
            "target mode {target_mode} out of range for order {order}"
        )));
    }
    if factors.len() != order - 1 {
        return Err(AtdError::Shape(format!(
            "expected {} factors, got {}",
            order - 1,
            factors.len()
        )));
    }
    let refs: Vec<&Matrix> = factors.iter().collect();
    let rank = shared_rank(&refs)?;
    let modes = (0..order).filter(|&m| m != target_mode);
    let mut levels = Vec::with_capacity(order - 1);
    for (mode, f) in modes.zip(factors) {
        if f.nrows() != t.shape()[mode] {
            return Err(AtdError::Shape(format!(
                "factor for mode {mode} has {} rows, tensor extent is {}",
                f.nrows(),
                t.shape()[mode]
            )));
        }
        let rows = f
            .as_slice()
            .ok_or_else(|| AtdError::Shape("factor must be in standard layout".into()))?;
        levels.push((mode, rows));
    }
    Ok(MttkrpCtx {
        data: t.data(),
        strides: strides_of(t.shape()),
        shape: t.shape(),
        levels,
        rank,
    })
}

fn standard(factors: &[&Matrix]) -> Vec<Matrix> {
    factors.iter().map(|f| f.as_standard_layout().into_owned()).collect()
}

/// Single-threaded MTTKRP: `unfold(t, target) · KR(non-target factors)` computed
/// by streaming over fibers, without forming the Khatri-Rao matrix.
/// `factors` lists the non-target factors in mode order.
pub fn mttkrp_seq(t: &DenseTensor, factors: &[&Matrix], target_mode: usize) -> Result<(Matrix, MttkrpStats)> {
    let owned = standard(factors);
    let ctx = mttkrp_setup(t, &owned, target_mode)?;
    let rows = t.shape()[target_mode];
    let r = ctx.rank;
    let stride = ctx.strides[target_mode];
    let mut out = vec![0.0; rows * r];
    let mut scratch = vec![0.0; ctx.scratch_len()];
    for (row, chunk) in out.chunks_mut(r).enumerate() {
        ctx.row(stride, row, chunk, &mut scratch);
    }
    let stats = MttkrpStats {
        scratch_bytes: scratch.len() * 8,
        output_bytes: out.len() * 8,
    };
    Ok((Array2::from_shape_vec((rows, r), out).unwrap(), stats))
}

/// Row-parallel MTTKRP. Each output row is reduced by one worker in the same
/// loop order as [`mttkrp_seq`], so both paths agree bitwise. Without the
/// `parallel` feature this is the sequential kernel.
pub fn mttkrp_par(t: &DenseTensor, factors: &[&Matrix], target_mode: usize) -> Result<(Matrix, MttkrpStats)> {
    #[cfg(feature = "parallel")]
    {
        let owned = standard(factors);
        let ctx = mttkrp_setup(t, &owned, target_mode)?;
        let rows = t.shape()[target_mode];
        let r = ctx.rank;
        let stride = ctx.strides[target_mode];
        let scratch_len = ctx.scratch_len();
        let mut out = vec![0.0; rows * r];
        out.par_chunks_mut(r).enumerate().for_each_init(
            || vec![0.0; scratch_len],
            |scratch, (row, chunk)| ctx.row(stride, row, chunk, scratch),
        );
        let stats = MttkrpStats {
            scratch_bytes: scratch_len * 8,
            output_bytes: out.len() * 8,
        };
        Ok((Array2::from_shape_vec((rows, r), out).unwrap(), stats))
    }
    #[cfg(not(feature = "parallel"))]
    {
        mttkrp_seq(t, factors, target_mode)
    }
}

/// MTTKRP through the default execution path.
pub fn mttkrp(t: &DenseTensor, factors: &[&Matrix], target_mode: usize) -> Result<Matrix> {
    mttkrp_par(t, factors, target_mode).map(|(m, _)| m)
}

pub fn mttkrp_with_stats(t: &DenseTensor, factors: &[&Matrix], target_mode: usize) -> Result<(Matrix, MttkrpStats)> {
    mttkrp_par(t, factors, target_mode)
}

fn reconstruct_into(weights: &[f64], levels: &[&[f64]], dims: &[usize], r: usize, out: &mut [f64]) {
    fn go(
        level: usize,
        partial: &[f64],
        levels: &[&[f64]],
        dims: &[usize],
        r: usize,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let fac = levels[level];
        if level + 1 == levels.len() {
            for (i, o) in out.iter_mut().enumerate() {
                let frow = &fac[i * r..(i + 1) * r];
                *o = partial.iter().zip(frow).map(|(p, f)| p * f).sum();
            }
            return;
        }
        let block: usize = dims[level + 1..].iter().product();
        let (cur, rest) = scratch.split_at_mut(r);
        for (i, chunk) in out.chunks_mut(block).enumerate() {
            let frow = &fac[i * r..(i + 1) * r];
            for ((c, &p), &f) in cur.iter_mut().zip(partial).zip(frow) {
                *c = p * f;
            }
            go(level + 1, cur, levels, dims, r, rest, chunk);
        }
    }
    let mut scratch = vec![0.0; levels.len() * r];
    go(0, weights, levels, dims, r, &mut scratch, out);
}

/// Kruskal reconstruction. With `weights = Some(X)` (n×R) the result has shape
/// `(n, I1, .., Id)` and slice `n` is `Σ_r X[n,r] · f1_r ∘ .. ∘ fd_r`; with `None`
/// the components are summed with unit weights into an order-`d` tensor.
pub fn kruskal_reconstruct(weights: Option<&Matrix>, factors: &[&Matrix]) -> Result<DenseTensor> {
    let r = shared_rank(factors)?;
    let owned = standard(factors);
    let levels: Vec<&[f64]> = owned.iter().map(|f| f.as_slice().unwrap()).collect();
    let dims: Vec<usize> = owned.iter().map(|f| f.nrows()).collect();
    let slab: usize = dims.iter().product();
    match weights {
        None => {
            let mut out = vec![0.0; slab];
            reconstruct_into(&vec![1.0; r], &levels, &dims, r, &mut out);
            Ok(DenseTensor::from_parts_unchecked(dims, out))
        }
        Some(x) => {
            if x.ncols() != r {
                return Err(AtdError::Shape(format!(
                    "weights have {} columns, factors have rank {r}",
                    x.ncols()
                )));
            }
            let x = x.as_standard_layout();
            let xs = x.as_slice().unwrap();
            let n = x.nrows();
            let mut out = vec![0.0; n * slab];
            #[cfg(feature = "parallel")]
            out.par_chunks_mut(slab)
                .enumerate()
                .for_each(|(i, chunk)| reconstruct_into(&xs[i * r..(i + 1) * r], &levels, &dims, r, chunk));
            #[cfg(not(feature = "parallel"))]
            out.chunks_mut(slab)
                .enumerate()
                .for_each(|(i, chunk)| reconstruct_into(&xs[i * r..(i + 1) * r], &levels, &dims, r, chunk));
            let mut shape = vec![n];
            shape.extend(dims);
            Ok(DenseTensor::from_parts_unchecked(shape, out))
        }
    }
}

/// Order-`d` reconstruction of a single coefficient vector.
pub fn kruskal_slice(x: &[f64], factors: &[&Matrix]) -> Result<DenseTensor> {
    let w = Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| AtdError::Shape(e.to_string()))?;
    let t = kruskal_reconstruct(Some(&w), factors)?;
    let shape = t.shape()[1..].to_vec();
    Ok(DenseTensor::from_parts_unchecked(shape, t.into_data()))
}

/// Squared Frobenius norm of `⟦X, F1, .., Fd⟧` via `sum(Π(X, F1, .., Fd))`.
pub fn kruskal_norm_sq(weights: &Matrix, factors: &[&Matrix]) -> Result<f64> {
    let mut all = vec![weights];
    all.extend_from_slice(factors);
    Ok(GramStack::new(&all, 0.0)?.hadamard.sum())
}
