//! Brute-force reference implementations.
//!
//! Nothing here calls into `kernels`, `objective` or `solver`; each routine
//! works from the definition so it can check the fast paths independently.
//! Sizes are capped (N ≤ 64 rows for dense G, extents ≤ 16) to keep tests quick.

use ndarray::{Array1, Array2};

use crate::error::{invalid, AtdError, Result};
use crate::tensor::{DenseTensor, Matrix};

pub const MAX_ROWS: usize = 64;
pub const MAX_EXTENT: usize = 16;

/// Materialized contrast matrix: `−1/N` on the diagonal, `(γ+1)/(N(N−1))` elsewhere.
pub fn dense_g_matrix(n: usize, gamma: f64) -> Result<Matrix> {
    if n < 2 {
        return Err(invalid("n", "need at least two rows"));
    }
    if n > MAX_ROWS {
        return Err(invalid("n", format!("oracle cap is {MAX_ROWS}")));
    }
    let nf = n as f64;
    let off = (gamma + 1.0) / (nf * (nf - 1.0));
    Ok(Array2::from_shape_fn(
        (n, n),
        |(i, j)| if i == j { -1.0 / nf } else { off },
    ))
}

/// Diagonal matrix of reciprocal row norms.
pub fn dense_d_matrix(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let mut d = Matrix::zeros((n, n));
    for i in 0..n {
        let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        d[[i, i]] = 1.0 / norm;
    }
    d
}

/// `β · Tr(Xᵀ D(X) G(γ) D(X̃) X̃)` with every matrix materialized.
pub fn dense_ss_loss(x: &Matrix, x_aug: &Matrix, gamma: f64, beta: f64) -> Result<f64> {
    let g = dense_g_matrix(x.nrows(), gamma)?;
    let m = x
        .t()
        .dot(&dense_d_matrix(x))
        .dot(&g)
        .dot(&dense_d_matrix(x_aug))
        .dot(x_aug);
    Ok(beta * m.diag().sum())
}

/// Central-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct FdSpec {
    pub step: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        Self { step: 1e-5 }
    }
}

/// Entrywise central-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(f: impl Fn(&Matrix) -> f64, point: &Matrix, spec: FdSpec) -> Result<Matrix> {
    if !(spec.step > 0.0) {
        return Err(invalid("step", "must be positive"));
    }
    let h = spec.step;
    let mut probe = point.clone();
    let mut grad = Matrix::zeros(point.raw_dim());
    for idx in 0..point.len() {
        let (i, j) = (idx / point.ncols(), idx % point.ncols());
        let orig = probe[[i, j]];
        probe[[i, j]] = orig + h;
        let up = f(&probe);
        probe[[i, j]] = orig - h;
        let down = f(&probe);
        probe[[i, j]] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(AtdError::NonFinite(format!("objective near entry ({i}, {j})")));
        }
        grad[[i, j]] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Solves `X · S = rhs` by Gaussian elimination with partial pivoting on `Sᵀ`.
pub fn naive_ls(rhs: &Matrix, system: &Matrix) -> Result<Matrix> {
    let n = system.nrows();
    if system.ncols() != n || rhs.ncols() != n {
        return Err(AtdError::Shape("naive_ls: incompatible shapes".into()));
    }
    let mut out = Matrix::zeros(rhs.raw_dim());
    for row in 0..rhs.nrows() {
        // augmented [Sᵀ | y]
        let mut a = Array2::<f64>::zeros((n, n + 1));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = system[[j, i]];
            }
            a[[i, n]] = rhs[[row, i]];
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[[p, col]].abs().total_cmp(&a[[q, col]].abs()))
                .unwrap();
            if a[[piv, col]].abs() < 1e-300 {
                return Err(AtdError::Singular {
                    pivot: col,
                    value: a[[piv, col]],
                });
            }
            if piv != col {
                for j in 0..=n {
                    a.swap([piv, j], [col, j]);
                }
            }
            for i in col + 1..n {
                let factor = a[[i, col]] / a[[col, col]];
                for j in col..=n {
                    a[[i, j]] -= factor * a[[col, j]];
                }
            }
        }
        for i in (0..n).rev() {
            let mut v = a[[i, n]];
            for j in i + 1..n {
                v -= a[[i, j]] * out[[row, j]];
            }
            out[[row, i]] = v / a[[i, i]];
        }
    }
    Ok(out)
}

fn multi_index(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for m in (0..shape.len()).rev() {
        idx[m] = flat % shape[m];
        flat /= shape[m];
    }
    idx
}

/// MTTKRP straight from the definition:
/// `M[i, r] = Σ_{idx: idx[mode] = i} T[idx] · Π_{m ≠ mode} F_m[idx_m, r]`.
pub fn naive_mttkrp(t: &DenseTensor, factors: &[&Matrix], mode: usize) -> Result<Matrix> {
    let shape = t.shape();
    if shape.iter().any(|&e| e > MAX_EXTENT) {
        return Err(invalid("t", format!("oracle cap is extent {MAX_EXTENT}")));
    }
    if factors.len() + 1 != shape.len() || mode >= shape.len() {
        return Err(AtdError::Shape("naive_mttkrp: factor count".into()));
    }
    let r = factors[0].ncols();
    let mut out = Matrix::zeros((shape[mode], r));
    for (flat, &v) in t.data().iter().enumerate() {
        let idx = multi_index(flat, shape);
        for c in 0..r {
            let mut p = v;
            let mut k = 0;
            for (m, &i) in idx.iter().enumerate() {
                if m == mode {
                    continue;
                }
                p *= factors[k][[i, c]];
                k += 1;
            }
            out[[idx[mode], c]] += p;
        }
    }
    Ok(out)
}

/// Elementwise Kruskal reconstruction `(n, I1, .., Id)`.
pub fn naive_kruskal(x: &Matrix, factors: &[&Matrix]) -> Result<DenseTensor> {
    let mut shape = vec![x.nrows()];
    shape.extend(factors.iter().map(|f| f.nrows()));
    DenseTensor::from_fn(shape, |idx| {
        (0..x.ncols())
            .map(|c| {
                factors
                    .iter()
                    .zip(&idx[1..])
                    .fold(x[[idx[0], c]], |acc, (f, &i)| acc * f[[i, c]])
            })
            .sum()
    })
}

/// `Σ (T − ⟦X, F⟧)²` computed element by element.
pub fn naive_residual_sq(t: &DenseTensor, x: &Matrix, factors: &[&Matrix]) -> Result<f64> {
    let rec = naive_kruskal(x, factors)?;
    if rec.shape() != t.shape() {
        return Err(AtdError::Shape("naive_residual_sq".into()));
    }
    Ok(t.data().iter().zip(rec.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Fixed point of `u = v1 − (β/‖u‖) v2` by bisection on `m = ‖u‖`.
///
/// Every iterate of the rule lies on the line `v1 − h v2`, so `‖u‖ ≥ dist(v1, span v2)`;
/// the root of `m − ‖v1 − (β/m) v2‖` is bracketed between that distance and
/// `‖v1‖ + β‖v2‖ / dist`.
pub fn fixed_point_u(v1: &Array1<f64>, v2: &Array1<f64>, beta: f64) -> Result<Array1<f64>> {
    if beta == 0.0 {
        return Ok(v1.clone());
    }
    let n2 = norm(v2);
    if n2 == 0.0 {
        return Ok(v1.clone());
    }
    let proj = v1.dot(v2) / n2;
    let dist_sq = (v1.dot(v1) - proj * proj).max(0.0);
    let dist = dist_sq.sqrt();
    let phi = |m: f64| m - norm(&(v1 - &(v2 * (beta / m))));
    let mut lo = if dist > 0.0 { dist } else { 1e-300 };
    let mut hi = norm(v1) + beta * n2 / lo.max(1e-12) + 1.0;
    if phi(lo) > 0.0 || phi(hi) < 0.0 {
        return Err(invalid("v1, v2", "no positive root bracketed"));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let m = 0.5 * (lo + hi);
    Ok(v1 - &(v2 * (beta / m)))
}
