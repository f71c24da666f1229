use std::time::Instant;

use super::als::cp_als_full_with_observer;
use super::config::{Mode, SaoConfig};
use super::memory::{matrix_bytes, AuxMeter};
use super::report::SweepReport;
use super::steps::{
    auxiliary_step_metered, blend, expanded_residual, main_solve_metered, ridge_coefficients_metered, Observed,
};
use super::stop::StopRule;
use crate::augment::Augmenter;
use crate::bases::{FactorId, KruskalBases};
use crate::error::{invalid, AtdError, Result};
use crate::objective::{ss_loss_clamped, LossTerms};
use crate::rng;
use crate::tensor::{batch_plan, DenseTensor, Shuffle, TensorBatch};

/// Result of a decomposition run.
#[derive(Debug, Clone)]
pub struct SaoOutcome {
    pub bases: KruskalBases,
    pub reports: Vec<SweepReport>,
    /// The loss-change rule ended the run before `max_sweeps`.
    pub converged: bool,
}

/// Called after every sweep with the report and the bases at that point.
pub type Observer<'a> = dyn FnMut(&SweepReport, &KruskalBases) + 'a;

/// Batch index lists for one sweep. A trailing batch with fewer than two rows
/// is merged into the one before it.
pub fn sweep_plan(n: usize, b: usize, shuffle: Shuffle) -> Result<Vec<Vec<usize>>> {
    let mut plan = batch_plan(n, b, shuffle)?;
    if plan.len() >= 2 && plan.last().is_some_and(|p| p.len() < 2) {
        let tail = plan.pop().unwrap();
        plan.last_mut().unwrap().extend(tail);
    }
    Ok(plan)
}

/// Runs the configured mode from a seeded random initialization.
pub fn sao_run(t: &DenseTensor, augmenter: Option<&dyn Augmenter>, cfg: &SaoConfig) -> Result<SaoOutcome> {
    sao_run_with_observer(t, augmenter, cfg, None, &mut |_, _| {})
}

/// Full entry point. `init` overrides the seeded initialization.
pub fn sao_run_with_observer(
    t: &DenseTensor,
    augmenter: Option<&dyn Augmenter>,
    cfg: &SaoConfig,
    init: Option<KruskalBases>,
    observer: &mut Observer<'_>,
) -> Result<SaoOutcome> {
    cfg.validate()?;
    if t.order() != 4 {
        return Err(AtdError::Shape(format!(
            "expected an order-4 data tensor, got shape {:?}",
            t.shape()
        )));
    }
    let dims = [t.shape()[1], t.shape()[2], t.shape()[3]];
    let bases = match init {
        Some(b) if b.dims() == dims && b.rank() == cfg.rank => b,
        Some(b) => {
            return Err(AtdError::Shape(format!(
                "initial bases {:?} rank {} do not fit data {:?} rank {}",
                b.dims(),
                b.rank(),
                dims,
                cfg.rank
            )))
        }
        None => KruskalBases::random(dims, cfg.rank, cfg.seed)?,
    };
    if cfg.mode == Mode::CpAlsFull {
        return cp_als_full_with_observer(t, cfg, bases, observer);
    }
    let n = t.shape()[0];
    if n < cfg.batch_size {
        return Err(invalid(
            "batch_size",
            format!("{} exceeds the {n} samples available", cfg.batch_size),
        ));
    }
    if cfg.mode.uses_augmentation() && augmenter.is_none() {
        return Err(invalid("augmenter", format!("mode {} needs an augmenter", cfg.mode)));
    }
    Sao::new(t, augmenter, cfg, bases).run(observer)
}

struct Sao<'a> {
    t: &'a DenseTensor,
    augmenter: Option<&'a dyn Augmenter>,
    cfg: &'a SaoConfig,
    bases: KruskalBases,
    meter: AuxMeter,
    batch_counter: usize,
    prev: Option<(DenseTensor, Option<DenseTensor>)>,
    running_bound: f64,
}

#[derive(Default)]
struct BatchStats {
    loss: LossTerms,
    bound_ratio: f64,
    clamped: usize,
}

impl<'a> Sao<'a> {
    fn new(t: &'a DenseTensor, augmenter: Option<&'a dyn Augmenter>, cfg: &'a SaoConfig, bases: KruskalBases) -> Self {
        Self {
            t,
            augmenter: if cfg.mode.uses_augmentation() { augmenter } else { None },
            cfg,
            bases,
            meter: AuxMeter::new(),
            batch_counter: 0,
            prev: None,
            running_bound: 0.0,
        }
    }

    fn run(mut self, observer: &mut Observer<'_>) -> Result<SaoOutcome> {
        let n = self.t.shape()[0];
        let mut stop = StopRule::new(self.cfg.stop_tol, self.cfg.stop_window);
        let mut reports = Vec::new();
        let mut converged = false;
        // the bound is checked on the blended factors against the largest
        // batch bound seen so far; the initial factors enter that maximum
        let alpha = self.cfg.alpha;
        self.running_bound = self.bases.norms_sq().iter().fold(0.0f64, |m, &v| m.max(alpha * v));
        for sweep in 1..=self.cfg.max_sweeps {
            let start = Instant::now();
            self.meter.reset_peak();
            let shuffle = if self.cfg.batch_size == n {
                Shuffle::Identity
            } else {
                Shuffle::Seeded(rng::derive_seed(self.cfg.seed, &[rng::TAG_SHUFFLE, sweep as u64]))
            };
            let plan = sweep_plan(n, self.cfg.batch_size, shuffle)?;
            let mut sum = LossTerms::default();
            let mut bound_ratio = 0.0f64;
            let mut clamped = 0;
            for (k, indices) in plan.iter().enumerate() {
                let rows = indices.len() as f64;
                let s = self.batch(sweep, k, indices)?;
                sum.cpd += s.loss.cpd / rows;
                sum.reg += s.loss.reg / rows;
                sum.ss += s.loss.ss / rows;
                bound_ratio = bound_ratio.max(s.bound_ratio);
                clamped += s.clamped;
            }
            let nb = plan.len() as f64;
            let loss = LossTerms {
                cpd: sum.cpd / nb,
                reg: sum.reg / nb,
                ss: sum.ss / nb,
            };
            if !loss.total().is_finite() {
                return Err(AtdError::Divergence(format!("sweep {sweep}: non-finite loss {loss:?}")));
            }
            if clamped > 0 {
                log::warn!("sweep {sweep}: {clamped} coefficient rows hit the norm floor");
            }
            let stopped = stop.observe(loss.total());
            let report = SweepReport {
                sweep,
                loss,
                seconds: start.elapsed().as_secs_f64(),
                peak_aux_bytes: self.meter.peak(),
                stopped,
                bound_ratio,
                clamped_rows: clamped,
            };
            log::debug!("sweep {sweep}: loss {:.6e}", loss.total());
            observer(&report, &self.bases);
            reports.push(report);
            if stopped {
                converged = true;
                break;
            }
        }
        Ok(SaoOutcome {
            bases: self.bases,
            reports,
            converged,
        })
    }

    fn batch(&mut self, sweep: usize, k: usize, indices: &[usize]) -> Result<BatchStats> {
        let cfg = self.cfg;
        self.batch_counter += 1;
        let eta = cfg.rate_at(self.batch_counter);
        let rows = indices.len();
        let r = cfg.rank;

        let batch = TensorBatch::from_parent(self.t, indices.to_vec())?;
        let tensor_bytes = batch.tensor.byte_size();
        self.meter.hold(tensor_bytes);
        let aug_seed = rng::derive_seed(cfg.seed, &[rng::TAG_AUGMENT, sweep as u64]);
        let mut aug = match self.augmenter {
            Some(a) => {
                self.meter.hold(tensor_bytes);
                Some(a.augment(&batch, aug_seed)?)
            }
            None => None,
        };
        let mut cur = batch.tensor;
        if cfg.moving_average {
            self.moving_average(&mut cur, &mut aug, eta)?;
        }

        // cold start and auxiliary refinement
        let coeff_bytes = matrix_bytes(rows, r);
        let x_init = ridge_coefficients_metered(&cur, &self.bases, cfg.alpha, &mut self.meter)?;
        self.meter.hold(coeff_bytes);
        let x_aug_init = match &aug {
            Some(a) => {
                self.meter.hold(coeff_bytes);
                Some(ridge_coefficients_metered(a, &self.bases, cfg.alpha, &mut self.meter)?)
            }
            None => None,
        };
        let beta = cfg.effective_beta();
        let gamma = cfg.gamma.resolve(rows);
        let (x, x_aug, clamped) = match &x_aug_init {
            Some(xa) => {
                let out = auxiliary_step_metered(
                    &x_init,
                    xa,
                    &self.bases,
                    cfg.alpha,
                    beta,
                    gamma,
                    cfg.t_rounds,
                    &mut self.meter,
                )?;
                if out.diverging {
                    log::warn!("sweep {sweep} batch {k}: auxiliary recursion is not contracting");
                }
                (out.x, Some(out.x_aug), out.clamped)
            }
            None => (x_init, None, 0),
        };

        let mut observed = vec![Observed {
            tensor: &cur,
            coeffs: &x,
        }];
        let mut norm_sq = cur.frobenius_norm_sq();
        if let (Some(a), Some(xa)) = (&aug, &x_aug) {
            observed.push(Observed { tensor: a, coeffs: xa });
            norm_sq += a.frobenius_norm_sq();
        }
        let bound = norm_sq + 2.0 * beta * (gamma + 2.0);
        let mut bound_ratio = 0.0f64;
        self.running_bound = self.running_bound.max(bound);
        let mut last = None;
        for f in FactorId::ALL {
            let s = main_solve_metered(f, &observed, &self.bases, cfg.alpha, &mut self.meter)?;
            let target_ratio = cfg.alpha * sq(&s.target) / bound;
            let updated = blend(self.bases.factor(f), &s.target, eta);
            let blended_ratio = cfg.alpha * sq(&updated) / self.running_bound;
            if target_ratio > 1.0 + 1e-9 || blended_ratio > 1.0 + 1e-9 {
                return Err(AtdError::Divergence(format!(
                    "factor {f:?} breaks the norm bound ({target_ratio:.3e}, {blended_ratio:.3e})"
                )));
            }
            bound_ratio = bound_ratio.max(target_ratio);
            *self.bases.factor_mut(f) = updated;
            last = Some(s);
        }
        self.bases.check_finite()?;

        // loss at (X*, X̃*) and the updated bases; the C solve already holds
        // every inner product needed
        let s = last.unwrap();
        let cpd = expanded_residual(norm_sq, &s.rhs, &self.bases.c, &s.others).max(0.0);
        let coeff_sq = sq(&x) + x_aug.as_ref().map_or(0.0, sq);
        let reg = cfg.alpha * (coeff_sq + self.bases.norms_sq().iter().sum::<f64>());
        let ss = match &x_aug {
            Some(xa) if beta > 0.0 => ss_loss_clamped(&x, xa, gamma, beta)?,
            _ => 0.0,
        };
        let coeff_count = if aug.is_some() { 2 } else { 1 };
        self.meter.release(coeff_count * coeff_bytes);
        self.meter.release(coeff_count * tensor_bytes);
        if cfg.moving_average {
            self.keep_previous(cur, aug);
        }
        Ok(BatchStats {
            loss: LossTerms { cpd, reg, ss },
            bound_ratio,
            clamped,
        })
    }

    /// `T^l ← η T^l + (1 − η) T^{l−1}` for the batch and its augmented copy.
    /// Skipped when shapes differ (a short last batch).
    fn moving_average(&mut self, cur: &mut DenseTensor, aug: &mut Option<DenseTensor>, eta: f64) -> Result<()> {
        if let Some((prev, prev_aug)) = &self.prev {
            if prev.shape() == cur.shape() {
                cur.blend_from(eta, prev)?;
                if let (Some(a), Some(pa)) = (aug.as_mut(), prev_aug) {
                    a.blend_from(eta, pa)?;
                }
            }
        }
        Ok(())
    }

    fn keep_previous(&mut self, cur: DenseTensor, aug: Option<DenseTensor>) {
        if let Some((p, pa)) = self.prev.take() {
            self.meter.release(p.byte_size() + pa.map_or(0, |a| a.byte_size()));
        }
        self.meter
            .hold(cur.byte_size() + aug.as_ref().map_or(0, |a| a.byte_size()));
        self.prev = Some((cur, aug));
    }
}

fn sq(m: &crate::tensor::Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}
