//! Closed-form pieces of one batch update: the ridge cold start, the
//! auxiliary fixed-point recursion and the main basis updates.

use ndarray::Array1;

use super::memory::{matrix_bytes, AuxMeter};
use crate::bases::{FactorId, KruskalBases};
use crate::error::{AtdError, Result};
use crate::kernels::{mttkrp_with_stats, ridge_solve, GramStack};
use crate::objective::{apply_g_gamma, normalize_rows_clamped};
use crate::tensor::{DenseTensor, Matrix};

fn check_batch(t: &DenseTensor, bases: &KruskalBases) -> Result<()> {
    let dims = bases.dims();
    if t.order() != 4 || t.shape()[1..] != dims {
        return Err(AtdError::Shape(format!(
            "batch shape {:?} does not match bases {:?}",
            t.shape(),
            dims
        )));
    }
    Ok(())
}

pub(crate) fn mttkrp_metered(
    t: &DenseTensor,
    factors: &[&Matrix],
    mode: usize,
    meter: &mut AuxMeter,
) -> Result<Matrix> {
    let (m, stats) = mttkrp_with_stats(t, factors, mode)?;
    meter.touch(stats.scratch_bytes + stats.output_bytes);
    Ok(m)
}

pub(crate) fn ridge_coefficients_metered(
    t: &DenseTensor,
    bases: &KruskalBases,
    alpha: f64,
    meter: &mut AuxMeter,
) -> Result<Matrix> {
    check_batch(t, bases)?;
    let r = bases.rank();
    let rhs = mttkrp_metered(t, &bases.factors(), 0, meter)?;
    meter.hold(matrix_bytes(rhs.nrows(), r));
    meter.touch(4 * matrix_bytes(r, r));
    let x = ridge_solve(&rhs, &GramStack::new(&bases.factors(), alpha)?);
    meter.release(matrix_bytes(rhs.nrows(), r));
    x
}

/// Row `n` minimizes `‖T⁽ⁿ⁾ − ⟦x, A, B, C⟧‖² + α‖x‖²`.
pub fn ridge_coefficients(t: &DenseTensor, bases: &KruskalBases, alpha: f64) -> Result<Matrix> {
    ridge_coefficients_metered(t, bases, alpha, &mut AuxMeter::new())
}

/// Initial coefficients of a batch and of its augmented copy.
pub fn cold_start(
    batch: &DenseTensor,
    batch_aug: &DenseTensor,
    bases: &KruskalBases,
    alpha: f64,
) -> Result<(Matrix, Matrix)> {
    Ok((
        ridge_coefficients(batch, bases, alpha)?,
        ridge_coefficients(batch_aug, bases, alpha)?,
    ))
}

/// Vector form of the auxiliary rule, `u ← v1 − (β/‖u‖)·v2`. Returns
/// `u⁰, u¹, .., u^rounds`.
pub fn iterate_rule(
    v1: &Array1<f64>,
    v2: &Array1<f64>,
    beta: f64,
    u0: &Array1<f64>,
    rounds: usize,
) -> Vec<Array1<f64>> {
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(u0.clone());
    for _ in 0..rounds {
        let u = out.last().unwrap();
        let norm = u.dot(u).sqrt().max(crate::objective::ROW_NORM_FLOOR);
        out.push(v1 - &(v2 * (beta / norm)));
    }
    out
}

/// Output of the matrix recursion for one side.
#[derive(Debug, Clone)]
pub struct Recursion {
    pub x: Matrix,
    pub clamped: usize,
    /// The step length grew between the first and the last round.
    pub diverging: bool,
}

/// `X ← V1 − β·D(X)·V2`, `rounds` times, starting from `V1`.
pub fn matrix_recursion(v1: &Matrix, v2: &Matrix, beta: f64, rounds: usize) -> Recursion {
    let mut x = v1.clone();
    let mut clamped = 0;
    let mut steps = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let norms = crate::objective::row_norms(&x);
        clamped += norms
            .iter()
            .filter(|&&n| !(n >= crate::objective::ROW_NORM_FLOOR))
            .count();
        let mut next = v1.clone();
        for ((mut row, v2r), n) in next.rows_mut().into_iter().zip(v2.rows()).zip(norms) {
            let s = beta / n.max(crate::objective::ROW_NORM_FLOOR);
            row.zip_mut_with(&v2r, |a, &b| *a -= s * b);
        }
        let step: f64 = (&next - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
        steps.push(step);
        x = next;
    }
    let diverging = steps.len() >= 2 && steps[steps.len() - 1] > steps[0];
    Recursion { x, clamped, diverging }
}

#[derive(Debug, Clone)]
pub struct AuxOutput {
    pub x: Matrix,
    pub x_aug: Matrix,
    pub clamped: usize,
    pub diverging: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn auxiliary_step_metered(
    x_init: &Matrix,
    x_aug_init: &Matrix,
    bases: &KruskalBases,
    alpha: f64,
    beta: f64,
    gamma: f64,
    rounds: usize,
    meter: &mut AuxMeter,
) -> Result<AuxOutput> {
    if x_init.dim() != x_aug_init.dim() {
        return Err(AtdError::Shape(format!(
            "X is {:?}, X̃ is {:?}",
            x_init.dim(),
            x_aug_init.dim()
        )));
    }
    if beta == 0.0 {
        return Ok(AuxOutput {
            x: x_init.clone(),
            x_aug: x_aug_init.clone(),
            clamped: 0,
            diverging: false,
        });
    }
    let (n, r) = x_init.dim();
    // V2, Ṽ2, two normalized copies, G·(·) and the recursion buffers
    meter.touch(8 * matrix_bytes(n, r) + 4 * matrix_bytes(r, r));
    let gram = GramStack::new(&bases.factors(), alpha)?;
    let (u, c1) = normalize_rows_clamped(x_init);
    let (u_aug, c2) = normalize_rows_clamped(x_aug_init);
    let v2 = ridge_solve(&apply_g_gamma(&u_aug, gamma)?, &gram)?;
    let v2_aug = ridge_solve(&apply_g_gamma(&u, gamma)?, &gram)?;
    let a = matrix_recursion(x_init, &v2, beta, rounds);
    let b = matrix_recursion(x_aug_init, &v2_aug, beta, rounds);
    Ok(AuxOutput {
        x: a.x,
        x_aug: b.x,
        clamped: c1 + c2 + a.clamped + b.clamped,
        diverging: a.diverging || b.diverging,
    })
}

/// Refines the cold-start coefficients with the alignment term. Each side
/// holds the other side's cold start fixed.
pub fn auxiliary_step(
    x_init: &Matrix,
    x_aug_init: &Matrix,
    bases: &KruskalBases,
    alpha: f64,
    beta: f64,
    gamma: f64,
    rounds: usize,
) -> Result<AuxOutput> {
    auxiliary_step_metered(
        x_init,
        x_aug_init,
        bases,
        alpha,
        beta,
        gamma,
        rounds,
        &mut AuxMeter::new(),
    )
}

/// One observed tensor together with its fixed coefficients.
#[derive(Debug, Clone, Copy)]
pub struct Observed<'a> {
    pub tensor: &'a DenseTensor,
    pub coeffs: &'a Matrix,
}

/// Normal-equation pieces of a basis update.
#[derive(Debug, Clone)]
pub struct MainSolve {
    /// Exact minimizer before blending.
    pub target: Matrix,
    /// Summed MTTKRP right-hand sides.
    pub rhs: Matrix,
    /// Summed Hadamard products of the non-target Grams, without `αI`.
    pub others: Matrix,
}

pub(crate) fn main_solve_metered(
    factor: FactorId,
    observed: &[Observed<'_>],
    bases: &KruskalBases,
    alpha: f64,
    meter: &mut AuxMeter,
) -> Result<MainSolve> {
    let r = bases.rank();
    let target_rows = bases.factor(factor).nrows();
    let mut rhs = Matrix::zeros((target_rows, r));
    let mut others = Matrix::zeros((r, r));
    meter.hold(matrix_bytes(target_rows, r) + matrix_bytes(r, r));
    for obs in observed {
        check_batch(obs.tensor, bases)?;
        let mut factors: Vec<&Matrix> = vec![obs.coeffs];
        factors.extend(FactorId::ALL.iter().filter(|&&f| f != factor).map(|&f| bases.factor(f)));
        rhs += &mttkrp_metered(obs.tensor, &factors, factor.mode(), meter)?;
        meter.touch(4 * matrix_bytes(r, r));
        others += &GramStack::new(&factors, 0.0)?.hadamard;
    }
    let target = ridge_solve(&rhs, &GramStack::from_hadamard(others.clone(), alpha));
    meter.release(matrix_bytes(target_rows, r) + matrix_bytes(r, r));
    Ok(MainSolve {
        target: target?,
        rhs,
        others,
    })
}

/// Exact minimizer of `Σ_o ‖T_o − ⟦X_o, A, B, C⟧‖² + α‖F‖²` over the chosen factor.
pub fn main_solve(factor: FactorId, observed: &[Observed<'_>], bases: &KruskalBases, alpha: f64) -> Result<MainSolve> {
    main_solve_metered(factor, observed, bases, alpha, &mut AuxMeter::new())
}

/// `(1 − η)·old + η·target`.
pub fn blend(old: &Matrix, target: &Matrix, eta: f64) -> Matrix {
    if eta == 1.0 {
        return target.clone();
    }
    old * (1.0 - eta) + target * eta
}

/// Solves for one factor and returns the blended update.
pub fn main_step(
    factor: FactorId,
    observed: &[Observed<'_>],
    bases: &KruskalBases,
    alpha: f64,
    eta: f64,
) -> Result<Matrix> {
    let s = main_solve(factor, observed, bases, alpha)?;
    Ok(blend(bases.factor(factor), &s.target, eta))
}

/// `‖T − ⟦..⟧‖²` expanded around a fresh solve:
/// `‖T‖² − 2⟨rhs, F⟩ + ⟨FᵀF, H⟩`, where `rhs` and `H` are the MTTKRP and the
/// Hadamard of the other Grams that produced `F`.
pub fn expanded_residual(norm_sq: f64, rhs: &Matrix, f: &Matrix, others: &Matrix) -> f64 {
    let inner = (rhs * f).sum();
    let ftf = crate::kernels::gram(f);
    norm_sq - 2.0 * inner + (&ftf * others).sum()
}
