//! Rectangular-window STFT without centering or padding:
//! `frames = ⌊(L − nfft)/hop⌋ + 1`, `bins = nfft/2 + 1`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::epoch::SignalEpoch;
use crate::error::{invalid, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftSpec {
    pub nfft: usize,
    pub hop: usize,
}

impl StftSpec {
    pub fn new(nfft: usize, hop: usize) -> Result<Self> {
        if nfft < 2 || !nfft.is_power_of_two() {
            return Err(invalid("nfft", format!("must be a power of two ≥ 2, got {nfft}")));
        }
        if hop == 0 || hop > nfft {
            return Err(invalid("hop", format!("must lie in 1..={nfft}, got {hop}")));
        }
        Ok(Self { nfft, hop })
    }

    pub fn bins(&self) -> usize {
        self.nfft / 2 + 1
    }
}

pub fn stft_frames(samples: usize, spec: StftSpec) -> Result<usize> {
    if samples < spec.nfft {
        return Err(invalid(
            "samples",
            format!("{samples} is shorter than nfft {}", spec.nfft),
        ));
    }
    Ok((samples - spec.nfft) / spec.hop + 1)
}

/// `(2·channels, bins, frames)`.
pub fn stft_shape(channels: usize, samples: usize, spec: StftSpec) -> Result<[usize; 3]> {
    Ok([2 * channels, spec.bins(), stft_frames(samples, spec)?])
}

/// Amplitude and phase of every frame. Output channel `2c` is the amplitude
/// of source channel `c`, `2c + 1` its phase in `(−π, π]`.
pub fn stft_tensorize(e: &SignalEpoch, spec: StftSpec) -> Result<DenseTensor> {
    let [oc, bins, frames] = stft_shape(e.channels(), e.samples(), spec)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(spec.nfft);
    let mut out = vec![0.0; oc * bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); spec.nfft];
    let plane = bins * frames;
    for (c, row) in e.data().rows().into_iter().enumerate() {
        for f in 0..frames {
            let start = f * spec.hop;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(row[start + k], 0.0);
            }
            fft.process(&mut buf);
            for (k, z) in buf.iter().take(bins).enumerate() {
                out[2 * c * plane + k * frames + f] = z.norm();
                let mut phase = z.arg();
                if phase == -std::f64::consts::PI {
                    phase = std::f64::consts::PI;
                }
                out[(2 * c + 1) * plane + k * frames + f] = phase;
            }
        }
    }
    DenseTensor::new(vec![oc, bins, frames], out)
}
