//! First-order Butterworth sections discretized with the bilinear transform.
//!
//! With prewarped `K = tan(π f_c / f_s)` the lowpass is
//! `y[n] = K/(1+K)·(x[n] + x[n−1]) − (K−1)/(K+1)·y[n−1]` and the highpass
//! `y[n] = 1/(1+K)·(x[n] − x[n−1]) − (K−1)/(K+1)·y[n−1]`. Initial state is zero.

use super::epoch::SignalEpoch;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Lowpass {
        cutoff: f64,
    },
    Highpass {
        cutoff: f64,
    },
    /// Highpass at `low` followed by lowpass at `high`.
    Band {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Section {
    b0: f64,
    b1: f64,
    a1: f64,
}

impl Section {
    fn new(cutoff: f64, fs: f64, high: bool) -> Self {
        let k = (std::f64::consts::PI * cutoff / fs).tan();
        let a1 = (k - 1.0) / (k + 1.0);
        if high {
            let g = 1.0 / (1.0 + k);
            Self { b0: g, b1: -g, a1 }
        } else {
            let g = k / (1.0 + k);
            Self { b0: g, b1: g, a1 }
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut xp, mut yp) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b0 * *v + self.b1 * xp - self.a1 * yp;
            xp = *v;
            yp = y;
            *v = y;
        }
    }
}

fn check_edge(name: &'static str, f: f64, fs: f64) -> Result<()> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(invalid(name, format!("{f} Hz is outside (0, {} Hz)", fs / 2.0)));
    }
    Ok(())
}

/// Filters every channel independently.
pub fn bandpass(e: &SignalEpoch, kind: FilterKind) -> Result<SignalEpoch> {
    let fs = e.sample_rate();
    let sections = match kind {
        FilterKind::Lowpass { cutoff } => {
            check_edge("cutoff", cutoff, fs)?;
            vec![Section::new(cutoff, fs, false)]
        }
        FilterKind::Highpass { cutoff } => {
            check_edge("cutoff", cutoff, fs)?;
            vec![Section::new(cutoff, fs, true)]
        }
        FilterKind::Band { low, high } => {
            check_edge("low", low, fs)?;
            check_edge("high", high, fs)?;
            if low >= high {
                return Err(invalid(
                    "low",
                    format!("band edges must satisfy low < high, got {low} ≥ {high}"),
                ));
            }
            vec![Section::new(low, fs, true), Section::new(high, fs, false)]
        }
    };
    let mut data = e.data().as_standard_layout().into_owned();
    for mut row in data.rows_mut() {
        let x = row.as_slice_mut().expect("standard layout");
        for s in &sections {
            s.run(x);
        }
    }
    Ok(e.with_data(data))
}
