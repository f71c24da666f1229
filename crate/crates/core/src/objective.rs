//! Loss terms: CP reconstruction, Tikhonov regularization and the empirical
//! self-supervised alignment loss `β·Tr(Xᵀ D(X) G(γ) D(X̃) X̃)`, plus the
//! diagnostic constants of the two-sided bound and the concentration radius.
//!
//! `G(γ)` is never materialized. For `N` rows it has `−1/N` on the diagonal and
//! `(γ+1)/(N(N−1))` elsewhere, so `G·Y` is a column sum and a rescaling.
//! In batch mode `N` is the batch size.

use crate::bases::KruskalBases;
use crate::error::{invalid, AtdError, Result};
use crate::kernels::kruskal_reconstruct;
use crate::tensor::{DenseTensor, Matrix};

/// Rows with smaller norm are rejected by [`ss_loss`] and clamped by the solver.
pub const ROW_NORM_FLOOR: f64 = 1e-12;

pub type CoefficientMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsLossParams {
    pub gamma: f64,
    pub beta: f64,
}

impl SsLossParams {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be ≥ 0, got {gamma}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(invalid("beta", format!("must be > 0, got {beta}")));
        }
        Ok(Self { gamma, beta })
    }
}

/// `‖T − ⟦X, A, B, C⟧‖²`.
pub fn residual_sq(t: &DenseTensor, x: &Matrix, bases: &KruskalBases) -> Result<f64> {
    let rec = kruskal_reconstruct(Some(x), &bases.factors())?;
    Ok(t.sub(&rec)?.frobenius_norm_sq())
}

/// Reconstruction loss over the original and augmented tensors.
pub fn cpd_loss(t: &DenseTensor, t_aug: &DenseTensor, x: &Matrix, x_aug: &Matrix, bases: &KruskalBases) -> Result<f64> {
    Ok(residual_sq(t, x, bases)? + residual_sq(t_aug, x_aug, bases)?)
}

fn sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// `α(‖X‖² + ‖X̃‖² + ‖A‖² + ‖B‖² + ‖C‖²)`.
pub fn reg_loss(x: &Matrix, x_aug: &Matrix, bases: &KruskalBases, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    Ok(alpha * (sq(x) + sq(x_aug) + bases.norms_sq().iter().sum::<f64>()))
}

/// `G(γ)·Y` in `O(N·R)`.
pub fn apply_g_gamma(y: &Matrix, gamma: f64) -> Result<Matrix> {
    let n = y.nrows();
    if n < 2 {
        return Err(invalid("y", format!("G(γ) needs at least 2 rows, got {n}")));
    }
    let nf = n as f64;
    let off = (gamma + 1.0) / (nf * (nf - 1.0));
    let diag = -1.0 / nf;
    let colsum = y.sum_axis(ndarray::Axis(0));
    let mut out = Matrix::zeros(y.raw_dim());
    for (mut o, yr) in out.rows_mut().into_iter().zip(y.rows()) {
        for ((o, &s), &v) in o.iter_mut().zip(&colsum).zip(&yr) {
            *o = off * (s - v) + diag * v;
        }
    }
    Ok(out)
}

/// Row norms.
pub fn row_norms(x: &Matrix) -> Vec<f64> {
    x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// `D(X)·X` with an error on rows below [`ROW_NORM_FLOOR`].
pub fn normalize_rows_strict(x: &Matrix) -> Result<Matrix> {
    let norms = row_norms(x);
    if let Some((row, &norm)) = norms.iter().enumerate().find(|(_, &n)| !(n >= ROW_NORM_FLOOR)) {
        return Err(AtdError::ZeroRow { row, norm });
    }
    Ok(scale_rows(x, &norms))
}

/// `D(X)·X` with norms floored at [`ROW_NORM_FLOOR`]; returns how many rows hit
/// the floor.
pub fn normalize_rows_clamped(x: &Matrix) -> (Matrix, usize) {
    let mut norms = row_norms(x);
    let mut clamped = 0;
    for n in norms.iter_mut() {
        if !(*n >= ROW_NORM_FLOOR) {
            *n = ROW_NORM_FLOOR;
            clamped += 1;
        }
    }
    (scale_rows(x, &norms), clamped)
}

fn scale_rows(x: &Matrix, norms: &[f64]) -> Matrix {
    let mut out = x.clone();
    for (mut row, &n) in out.rows_mut().into_iter().zip(norms) {
        row.mapv_inplace(|v| v / n);
    }
    out
}

fn trace_form(u: &Matrix, u_aug: &Matrix, p: SsLossParams) -> Result<f64> {
    if u.dim() != u_aug.dim() {
        return Err(AtdError::Shape(format!("X is {:?}, X̃ is {:?}", u.dim(), u_aug.dim())));
    }
    let g = apply_g_gamma(u_aug, p.gamma)?;
    Ok(p.beta * (u * &g).sum())
}

/// Empirical alignment loss. Equals
/// `β[(γ+1)/(N(N−1)) Σ_{n≠s} cos(x_n, x̃_s) − (1/N) Σ_n cos(x_n, x̃_n)]`.
pub fn ss_loss(x: &Matrix, x_aug: &Matrix, p: SsLossParams) -> Result<f64> {
    trace_form(&normalize_rows_strict(x)?, &normalize_rows_strict(x_aug)?, p)
}

/// Solver-side variant that floors row norms instead of failing.
pub(crate) fn ss_loss_clamped(x: &Matrix, x_aug: &Matrix, gamma: f64, beta: f64) -> Result<f64> {
    let (u, _) = normalize_rows_clamped(x);
    let (v, _) = normalize_rows_clamped(x_aug);
    trace_form(&u, &v, SsLossParams { gamma, beta })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub cpd: f64,
    pub reg: f64,
    pub ss: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.cpd + self.reg + self.ss
    }
}

/// All three terms of the objective on one (batch of) data.
pub fn total_loss(
    t: &DenseTensor,
    t_aug: &DenseTensor,
    x: &Matrix,
    x_aug: &Matrix,
    bases: &KruskalBases,
    alpha: f64,
    p: SsLossParams,
) -> Result<LossTerms> {
    Ok(LossTerms {
        cpd: cpd_loss(t, t_aug, x, x_aug, bases)?,
        reg: reg_loss(x, x_aug, bases, alpha)?,
        ss: ss_loss(x, x_aug, p)?,
    })
}

/// Constants of the two-sided bound between the label-aware loss and its
/// label-free surrogate. Diagnostic only.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    pub rates: Vec<f64>,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn bound_constants(rates: &[f64], lambda: f64) -> Result<BoundConstants> {
    if rates.is_empty() {
        return Err(invalid("rates", "no classes"));
    }
    if let Some(&r) = rates.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(invalid("rates", format!("{r} is outside (0, 1)")));
    }
    let total: f64 = rates.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid("rates", format!("sum to {total}, expected 1")));
    }
    if !(lambda >= 1.0) {
        return Err(invalid("lambda", format!("must be ≥ 1, got {lambda}")));
    }
    let ratio = |c: f64| lambda * c / (1.0 - c);
    let c1 = 1.0 + rates.iter().map(|&c| ratio(c)).fold(f64::NEG_INFINITY, f64::max);
    let c2 = 1.0 + rates.iter().map(|&c| ratio(c)).fold(f64::INFINITY, f64::min);
    Ok(BoundConstants {
        rates: rates.to_vec(),
        lambda,
        c1,
        c2,
    })
}

/// High-probability radius of the estimator around its expectation:
/// `sqrt((1 + (γ+1)²/(N−1)) · (2/N) · ln(2/δ))`.
pub fn concentration_bound(n: usize, gamma: f64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", "need at least 2 samples"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be ≥ 0, got {gamma}")));
    }
    let nf = n as f64;
    Ok(((1.0 + (gamma + 1.0).powi(2) / (nf - 1.0)) * (2.0 / nf) * (2.0 / delta).ln()).sqrt())
}
