use std::time::Instant;

use super::config::SaoConfig;
use super::memory::{matrix_bytes, AuxMeter};
use super::report::SweepReport;
use super::sao::{Observer, SaoOutcome};
use super::steps::{expanded_residual, main_solve_metered, mttkrp_metered, Observed};
use super::stop::StopRule;
use crate::bases::{FactorId, KruskalBases};
use crate::error::{AtdError, Result};
use crate::kernels::{ridge_solve, GramStack};
use crate::objective::LossTerms;
use crate::tensor::{DenseTensor, Matrix};

/// Relative slack allowed when asserting that a half-step did not raise the loss.
const MONOTONE_SLACK: f64 = 1e-9;

/// Regularized CP-ALS over the whole tensor, from a seeded initialization.
pub fn cp_als_full(t: &DenseTensor, cfg: &SaoConfig) -> Result<SaoOutcome> {
    cfg.validate()?;
    if t.order() != 4 {
        return Err(AtdError::Shape(format!(
            "expected an order-4 data tensor, got shape {:?}",
            t.shape()
        )));
    }
    let dims = [t.shape()[1], t.shape()[2], t.shape()[3]];
    let init = KruskalBases::random(dims, cfg.rank, cfg.seed)?;
    cp_als_full_with_observer(t, cfg, init, &mut |_, _| {})
}

/// Exact ridge solves for `X`, then `A`, `B`, `C`, once per sweep. Fails with
/// [`AtdError::Divergence`] if any half-step raises `ℒ_cpd + ℒ_reg`.
pub fn cp_als_full_with_observer(
    t: &DenseTensor,
    cfg: &SaoConfig,
    mut bases: KruskalBases,
    observer: &mut Observer<'_>,
) -> Result<SaoOutcome> {
    let n = t.shape()[0];
    let r = cfg.rank;
    let alpha = cfg.alpha;
    let norm_t = t.frobenius_norm_sq();
    let slack = MONOTONE_SLACK * (norm_t + 1.0);
    let mut meter = AuxMeter::new();
    let mut stop = StopRule::new(cfg.stop_tol, cfg.stop_window);
    let mut reports = Vec::new();
    let mut converged = false;
    let mut prev_total = f64::INFINITY;
    meter.hold(matrix_bytes(n, r));
    for sweep in 1..=cfg.max_sweeps {
        let start = Instant::now();
        meter.reset_peak();
        let mut check = |stage: &str, cpd: f64, x: &Matrix, bases: &KruskalBases| -> Result<LossTerms> {
            let reg = alpha * (sq(x) + bases.norms_sq().iter().sum::<f64>());
            let total = cpd + reg;
            if !total.is_finite() {
                return Err(AtdError::Divergence(format!("sweep {sweep}, {stage}: non-finite loss")));
            }
            if total > prev_total + slack {
                return Err(AtdError::Divergence(format!(
                    "sweep {sweep}, {stage}: loss rose from {prev_total:.12e} to {total:.12e}"
                )));
            }
            prev_total = total;
            Ok(LossTerms { cpd, reg, ss: 0.0 })
        };

        let rhs = mttkrp_metered(t, &bases.factors(), 0, &mut meter)?;
        let gram = GramStack::new(&bases.factors(), alpha)?;
        meter.touch(matrix_bytes(n, r) + 4 * matrix_bytes(r, r));
        let x = ridge_solve(&rhs, &gram)?;
        check(
            "X",
            expanded_residual(norm_t, &rhs, &x, &gram.hadamard).max(0.0),
            &x,
            &bases,
        )?;

        let mut loss = LossTerms::default();
        for f in FactorId::ALL {
            let obs = [Observed { tensor: t, coeffs: &x }];
            let s = main_solve_metered(f, &obs, &bases, alpha, &mut meter)?;
            *bases.factor_mut(f) = s.target.clone();
            let cpd = expanded_residual(norm_t, &s.rhs, &s.target, &s.others).max(0.0);
            loss = check(&format!("{f:?}"), cpd, &x, &bases)?;
        }
        let per_sample = LossTerms {
            cpd: loss.cpd / n as f64,
            reg: loss.reg / n as f64,
            ss: 0.0,
        };
        let stopped = stop.observe(per_sample.total());
        let report = SweepReport {
            sweep,
            loss: per_sample,
            seconds: start.elapsed().as_secs_f64(),
            peak_aux_bytes: meter.peak(),
            stopped,
            bound_ratio: 0.0,
            clamped_rows: 0,
        };
        observer(&report, &bases);
        reports.push(report);
        if stopped {
            converged = true;
            break;
        }
    }
    Ok(SaoOutcome {
        bases,
        reports,
        converged,
    })
}

fn sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}
