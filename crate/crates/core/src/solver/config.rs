use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AtdError, Result};

/// Which objective the optimizer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reconstruction of original and augmented data plus the alignment loss.
    Atd,
    /// Same as `Atd` with the alignment weight forced to zero.
    AtdSsMinus,
    /// Full-tensor regularized ALS.
    CpAlsFull,
    /// Batched CP without any augmented term.
    Sals,
}

impl Mode {
    pub fn uses_augmentation(self) -> bool {
        matches!(self, Mode::Atd | Mode::AtdSsMinus)
    }
}

impl FromStr for Mode {
    type Err = AtdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atd" => Ok(Mode::Atd),
            "atd_ss_minus" | "ssminus" | "ss_minus" => Ok(Mode::AtdSsMinus),
            "cp_als_full" | "als" => Ok(Mode::CpAlsFull),
            "sals" => Ok(Mode::Sals),
            other => Err(invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Atd => "atd",
            Mode::AtdSsMinus => "atd_ss_minus",
            Mode::CpAlsFull => "cp_als_full",
            Mode::Sals => "sals",
        })
    }
}

/// How the blend rate evolves over batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// `η_l = min(1, c / l)` for the `l`-th batch (1-based, counted across sweeps).
    Harmonic,
}

impl FromStr for Schedule {
    type Err = AtdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "harmonic" => Ok(Schedule::Harmonic),
            other => Err(invalid("schedule", format!("unknown schedule `{other}`"))),
        }
    }
}

/// `γ` either fixed or tied to the size of the batch being processed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSetting {
    Fixed(f64),
    BatchSize,
}

impl GammaSetting {
    pub fn resolve(self, batch_rows: usize) -> f64 {
        match self {
            GammaSetting::Fixed(g) => g,
            GammaSetting::BatchSize => batch_rows as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaoConfig {
    pub rank: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: GammaSetting,
    pub eta: f64,
    pub schedule: Schedule,
    pub harmonic_c: f64,
    pub batch_size: usize,
    pub t_rounds: usize,
    pub max_sweeps: usize,
    /// Relative change of the sweep loss below which a sweep counts as flat.
    /// Zero disables the stopping rule.
    pub stop_tol: f64,
    pub stop_window: usize,
    pub seed: u64,
    pub mode: Mode,
    pub moving_average: bool,
}

/// Constant `c` of the harmonic schedule used when none is given.
pub const DEFAULT_HARMONIC_C: f64 = 0.5;

impl Default for SaoConfig {
    fn default() -> Self {
        Self {
            rank: 32,
            alpha: 1e-3,
            beta: 2.0,
            gamma: GammaSetting::BatchSize,
            eta: 2e-3,
            schedule: Schedule::Constant,
            harmonic_c: DEFAULT_HARMONIC_C,
            batch_size: 128,
            t_rounds: 1,
            max_sweeps: 50,
            stop_tol: 1e-3,
            stop_window: 3,
            seed: 0,
            mode: Mode::Atd,
            moving_average: false,
        }
    }
}

impl SaoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid("rank", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be ≥ 0, got {}", self.beta)));
        }
        if let GammaSetting::Fixed(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid("gamma", format!("must be ≥ 0, got {g}")));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.harmonic_c > 0.0 && self.harmonic_c.is_finite()) {
            return Err(invalid("harmonic_c", format!("must be > 0, got {}", self.harmonic_c)));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch_size", "must be at least 2"));
        }
        if self.t_rounds == 0 {
            return Err(invalid("t_rounds", "must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol", "must be ≥ 0"));
        }
        if self.stop_window == 0 {
            return Err(invalid("stop_window", "must be at least 1"));
        }
        Ok(())
    }

    /// Schedule in force. Moving-average mode always runs the harmonic one.
    pub fn effective_schedule(&self) -> Schedule {
        if self.moving_average {
            Schedule::Harmonic
        } else {
            self.schedule
        }
    }

    /// Blend rate for the `l`-th batch (1-based, counted across sweeps).
    pub fn rate_at(&self, batch_counter: usize) -> f64 {
        match self.effective_schedule() {
            Schedule::Constant => self.eta,
            Schedule::Harmonic => (self.harmonic_c / batch_counter.max(1) as f64).min(1.0),
        }
    }

    /// `β` actually applied: zero unless the mode carries the alignment term.
    pub fn effective_beta(&self) -> f64 {
        match self.mode {
            Mode::Atd => self.beta,
            _ => 0.0,
        }
    }

    /// Parses the key-value run configuration. Every key must be present.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| AtdError::Format(format!("config: {}", e.message())))?;
        file.into_config()
    }

    /// Renders the configuration in the same key-value format.
    pub fn to_config_string(&self) -> String {
        let schedule = match self.schedule {
            Schedule::Constant => "constant",
            Schedule::Harmonic => "harmonic",
        };
        let gamma = match self.gamma {
            GammaSetting::Fixed(g) => format!("{g:?}"),
            GammaSetting::BatchSize => "\"batch\"".to_string(),
        };
        format!(
            "rank = {}\nalpha = {:?}\nbeta = {:?}\ngamma = {}\neta = {:?}\nschedule = \"{}\"\n\
             harmonic_c = {:?}\nbatch_size = {}\nt_rounds = {}\nmax_sweeps = {}\nstop_tol = {:?}\n\
             stop_window = {}\nseed = {}\nmode = \"{}\"\nmoving_average = {}\n",
            self.rank,
            self.alpha,
            self.beta,
            gamma,
            self.eta,
            schedule,
            self.harmonic_c,
            self.batch_size,
            self.t_rounds,
            self.max_sweeps,
            self.stop_tol,
            self.stop_window,
            self.seed,
            self.mode,
            self.moving_average
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    rank: usize,
    alpha: f64,
    beta: f64,
    gamma: GammaField,
    eta: f64,
    schedule: String,
    harmonic_c: f64,
    batch_size: usize,
    t_rounds: usize,
    max_sweeps: usize,
    stop_tol: f64,
    stop_window: usize,
    seed: u64,
    mode: String,
    moving_average: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GammaField {
    Number(f64),
    Int(i64),
    Word(String),
}

impl ConfigFile {
    fn into_config(self) -> Result<SaoConfig> {
        let gamma = match self.gamma {
            GammaField::Number(g) => GammaSetting::Fixed(g),
            GammaField::Int(g) => GammaSetting::Fixed(g as f64),
            GammaField::Word(w) if w == "batch" => GammaSetting::BatchSize,
            GammaField::Word(w) => return Err(invalid("gamma", format!("expected a number or \"batch\", got `{w}`"))),
        };
        let cfg = SaoConfig {
            rank: self.rank,
            alpha: self.alpha,
            beta: self.beta,
            gamma,
            eta: self.eta,
            schedule: self.schedule.parse()?,
            harmonic_c: self.harmonic_c,
            batch_size: self.batch_size,
            t_rounds: self.t_rounds,
            max_sweeps: self.max_sweeps,
            stop_tol: self.stop_tol,
            stop_window: self.stop_window,
            seed: self.seed,
            mode: self.mode.parse()?,
            moving_average: self.moving_average,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
