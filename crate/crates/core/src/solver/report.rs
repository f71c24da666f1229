use std::io::Write;

use crate::error::Result;
use crate::objective::LossTerms;

/// Summary of one pass over all batches. Losses are per-sample means.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// 1-based.
    pub sweep: usize,
    pub loss: LossTerms,
    pub seconds: f64,
    pub peak_aux_bytes: usize,
    pub stopped: bool,
    /// Largest `α‖F‖² / bound` seen after a main step during the sweep.
    pub bound_ratio: f64,
    /// Rows whose norm hit the floor inside the auxiliary step.
    pub clamped_rows: usize,
}

pub const CSV_HEADER: &str = "sweep,loss_total,loss_cpd,loss_reg,loss_ss,seconds,peak_aux_bytes";

pub fn write_csv(reports: &[SweepReport], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:.6},{}",
            r.sweep,
            r.loss.total(),
            r.loss.cpd,
            r.loss.reg,
            r.loss.ss,
            r.seconds,
            r.peak_aux_bytes
        )?;
    }
    Ok(())
}
