//! Augmented views of a batch.
//!
//! The optimizer only needs a [`Augmenter`]: something that maps a batch of
//! samples to a tensor of the same shape. [`GaussianNoise`] works in tensor
//! space; [`SignalAugmenter`] replays the signal-level augmentations on the raw
//! epochs behind each sample and re-tensorizes them through the STFT.

mod epoch;
mod filter;
mod ops;
mod pipeline;
mod stft;

pub use epoch::{read_epoch, write_epoch, SignalEpoch};
pub use filter::{bandpass, FilterKind};
pub use ops::{jitter, rotation3d, rotation_from_seed, time_rotation, JitterKind};
pub use pipeline::{augment, tensorize_epochs, AugmentationPlan, Band, Method, SignalAugmenter};
pub use stft::{stft_frames, stft_shape, stft_tensorize, StftSpec};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::rng;
use crate::tensor::{DenseTensor, TensorBatch};

pub trait Augmenter: Sync {
    /// Returns a tensor shaped like `batch.tensor`. Draws must depend only on
    /// `seed` and the parent sample indices, never on batch composition.
    fn augment(&self, batch: &TensorBatch, seed: u64) -> Result<DenseTensor>;
}

/// Adds i.i.d. `N(0, σ²)` noise to every entry.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoise {
    pub sigma: f64,
}

impl GaussianNoise {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be ≥ 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

impl Augmenter for GaussianNoise {
    fn augment(&self, batch: &TensorBatch, seed: u64) -> Result<DenseTensor> {
        let t = &batch.tensor;
        let slab = t.slab_len();
        let mut data = t.data().to_vec();
        let fill = |(chunk, &parent): (&mut [f64], &usize)| {
            let mut r = rng::stream(seed, &[rng::TAG_AUGMENT, parent as u64]);
            for v in chunk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v += self.sigma * z;
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_chunks_mut(slab).zip(batch.indices.par_iter()).for_each(fill);
        }
        #[cfg(not(feature = "parallel"))]
        data.chunks_mut(slab).zip(batch.indices.iter()).for_each(fill);
        DenseTensor::new(t.shape().to_vec(), data)
    }
}
