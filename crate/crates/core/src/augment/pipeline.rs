use rand::Rng;

use super::epoch::SignalEpoch;
use super::filter::{bandpass, FilterKind};
use super::ops::{jitter, rotation3d, rotation_from_seed, time_rotation, JitterKind};
use super::stft::{stft_shape, stft_tensorize, StftSpec};
use super::Augmenter;
use crate::error::{invalid, AtdError, Result};
use crate::rng;
use crate::tensor::{DenseTensor, TensorBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Jitter,
    Bandpass,
    TimeRotation,
    Rotation3d,
}

/// Range from which a filter cutoff is drawn, in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    pub methods: Vec<Method>,
    pub jitter_d: f64,
    pub highpass: Band,
    pub lowpass: Band,
}

impl AugmentationPlan {
    fn preset(jitter_d: f64, highpass: (f64, f64), lowpass: (f64, f64), with_3d: bool) -> Self {
        let mut methods = vec![Method::Jitter, Method::Bandpass, Method::TimeRotation];
        if with_3d {
            methods.push(Method::Rotation3d);
        }
        Self {
            methods,
            jitter_d,
            highpass: Band {
                low: highpass.0,
                high: highpass.1,
            },
            lowpass: Band {
                low: lowpass.0,
                high: lowpass.1,
            },
        }
    }

    /// 7-channel sleep EEG at 100 Hz.
    pub fn sleep_edf() -> Self {
        Self::preset(0.05, (1.0, 30.0), (10.0, 49.0), false)
    }

    /// 9-channel accelerometer/gyroscope at 50 Hz.
    pub fn har() -> Self {
        Self::preset(0.002, (1.0, 20.0), (5.0, 24.5), true)
    }

    /// 12-lead ECG at 500 Hz.
    pub fn ptb_xl() -> Self {
        Self::preset(0.001, (1.0, 30.0), (10.0, 50.0), false)
    }

    /// 6-channel sleep EEG at 200 Hz.
    pub fn mgh() -> Self {
        Self::preset(0.01, (1.0, 30.0), (10.0, 50.0), false)
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one augmentation must be enabled"));
        }
        if !(self.jitter_d >= 0.0 && self.jitter_d.is_finite()) {
            return Err(invalid("jitter_d", format!("must be ≥ 0, got {}", self.jitter_d)));
        }
        if self.methods.contains(&Method::Bandpass) {
            let nyq = sample_rate / 2.0;
            for (name, b) in [("highpass", self.highpass), ("lowpass", self.lowpass)] {
                if !(b.low > 0.0 && b.low <= b.high && b.high < nyq) {
                    return Err(invalid(
                        name,
                        format!("cutoffs [{}, {}] must lie in (0, {nyq}) Hz", b.low, b.high),
                    ));
                }
            }
            if self.highpass.high >= self.lowpass.high {
                return Err(invalid("highpass", "highpass range must end below the lowpass range"));
            }
        }
        Ok(())
    }
}

fn uniform(r: &mut impl Rng, b: Band) -> f64 {
    if b.low == b.high {
        b.low
    } else {
        r.random_range(b.low..b.high)
    }
}

/// Method picked for one draw: uniform over the enabled methods.
pub(crate) fn choose(plan: &AugmentationPlan, seed: u64) -> Method {
    let mut r = rng::stream(seed, &[rng::TAG_AUGMENT]);
    plan.methods[r.random_range(0..plan.methods.len())]
}

/// Applies one randomly chosen augmentation; sub-kinds (jitter band, filter
/// type) are also drawn with equal probability.
pub fn augment(e: &SignalEpoch, plan: &AugmentationPlan, seed: u64) -> Result<SignalEpoch> {
    plan.validate(e.sample_rate())?;
    let method = choose(plan, seed);
    let mut r = rng::stream(seed, &[rng::TAG_AUGMENT, 1]);
    let sub = rng::derive_seed(seed, &[rng::TAG_AUGMENT, 2]);
    match method {
        Method::Jitter => {
            let kind = [JitterKind::High, JitterKind::Low, JitterKind::Both][r.random_range(0..3)];
            jitter(e, plan.jitter_d, kind, sub)
        }
        Method::Bandpass => {
            let h = uniform(&mut r, plan.highpass);
            let kind = match r.random_range(0..3) {
                0 => FilterKind::Highpass { cutoff: h },
                1 => FilterKind::Lowpass {
                    cutoff: uniform(&mut r, plan.lowpass),
                },
                _ => {
                    let lo = plan.lowpass.low.max(h);
                    let l = uniform(
                        &mut r,
                        Band {
                            low: lo,
                            high: plan.lowpass.high,
                        },
                    );
                    if l > h {
                        FilterKind::Band { low: h, high: l }
                    } else {
                        FilterKind::Highpass { cutoff: h }
                    }
                }
            };
            bandpass(e, kind)
        }
        Method::TimeRotation => time_rotation(e, r.random_range(1..e.samples())),
        Method::Rotation3d => rotation3d(e, &rotation_from_seed(sub)),
    }
}

/// Stacks the STFT of every epoch into `(N, 2·channels, bins, frames)`.
pub fn tensorize_epochs(epochs: &[SignalEpoch], spec: StftSpec) -> Result<DenseTensor> {
    let first = epochs.first().ok_or_else(|| invalid("epochs", "no epochs given"))?;
    let shape = stft_shape(first.channels(), first.samples(), spec)?;
    let mut data = Vec::with_capacity(epochs.len() * shape.iter().product::<usize>());
    for e in epochs {
        let t = stft_tensorize(e, spec)?;
        if t.shape() != shape {
            return Err(AtdError::Shape(format!(
                "epoch shapes differ: {:?} vs {shape:?}",
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![epochs.len()];
    full.extend(shape);
    DenseTensor::new(full, data)
}

/// Signal-space augmentation followed by STFT, for tensors built with
/// [`tensorize_epochs`] from the same epochs.
#[derive(Debug, Clone)]
pub struct SignalAugmenter {
    pub epochs: Vec<SignalEpoch>,
    pub plan: AugmentationPlan,
    pub stft: StftSpec,
}

impl SignalAugmenter {
    pub fn new(epochs: Vec<SignalEpoch>, plan: AugmentationPlan, stft: StftSpec) -> Result<Self> {
        for e in &epochs {
            plan.validate(e.sample_rate())?;
        }
        Ok(Self { epochs, plan, stft })
    }
}

impl Augmenter for SignalAugmenter {
    fn augment(&self, batch: &TensorBatch, seed: u64) -> Result<DenseTensor> {
        let one = |&p: &usize| -> Result<DenseTensor> {
            let e = self
                .epochs
                .get(p)
                .ok_or_else(|| invalid("batch", format!("sample {p} has no epoch")))?;
            stft_tensorize(&augment(e, &self.plan, rng::derive_seed(seed, &[p as u64]))?, self.stft)
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<Result<DenseTensor>> = {
            use rayon::prelude::*;
            batch.indices.par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Result<DenseTensor>> = batch.indices.iter().map(one).collect();
        let slab = &batch.tensor.shape()[1..];
        let mut data = Vec::with_capacity(batch.tensor.len());
        for p in parts {
            let p = p?;
            if p.shape() != slab {
                return Err(AtdError::Shape(format!(
                    "augmented slab {:?} vs batch {slab:?}",
                    p.shape()
                )));
            }
            data.extend_from_slice(p.data());
        }
        DenseTensor::new(batch.tensor.shape().to_vec(), data)
    }
}
