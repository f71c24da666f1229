//! Stochastic alternating optimization and its full-batch ALS baseline.
//!
//! Each batch runs a ridge cold start for the coefficients of the original and
//! augmented slices, refines them with the auxiliary fixed-point rule, then
//! updates `A`, `B`, `C` in turn by exact ridge solves blended with rate `η`.

mod als;
mod config;
mod memory;
mod report;
mod sao;
mod steps;
mod stop;

pub use als::{cp_als_full, cp_als_full_with_observer};
pub use config::{GammaSetting, Mode, SaoConfig, Schedule, DEFAULT_HARMONIC_C};
pub use memory::AuxMeter;
pub use report::{write_csv, SweepReport, CSV_HEADER};
pub use sao::{sao_run, sao_run_with_observer, sweep_plan, Observer, SaoOutcome};
pub use steps::{
    auxiliary_step, blend, cold_start, expanded_residual, iterate_rule, main_solve, main_step, matrix_recursion,
    ridge_coefficients, AuxOutput, MainSolve, Observed, Recursion,
};
pub use stop::StopRule;
