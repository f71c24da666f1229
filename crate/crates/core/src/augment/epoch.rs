use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{invalid, AtdError, Result};
use crate::io;
use crate::tensor::{DenseTensor, Matrix};

/// A multichannel recording, `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEpoch {
    data: Matrix,
    sample_rate: f64,
}

impl SignalEpoch {
    pub fn new(data: Matrix, sample_rate: f64) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(invalid("data", "epoch needs at least one channel"));
        }
        if data.ncols() < 2 {
            return Err(invalid(
                "data",
                format!("epoch needs at least 2 samples, got {}", data.ncols()),
            ));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(invalid("sample_rate", format!("must be > 0, got {sample_rate}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AtdError::NonFinite("epoch data".into()));
        }
        Ok(Self { data, sample_rate })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    /// Same rate, new samples. Used by the augmentations, which keep the shape.
    pub(crate) fn with_data(&self, data: Matrix) -> Self {
        debug_assert_eq!(data.dim(), self.data.dim());
        Self {
            data,
            sample_rate: self.sample_rate,
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hdr");
    PathBuf::from(name)
}

/// Writes the samples as an order-2 `.dtz` file and `sample_rate` to `<path>.hdr`.
pub fn write_epoch(e: &SignalEpoch, path: &Path) -> Result<()> {
    let t = DenseTensor::new(vec![e.channels(), e.samples()], e.data.iter().copied().collect())?;
    io::write_tensor(&t, path)?;
    fs::write(sidecar(path), format!("sample_rate = {:?}\n", e.sample_rate))?;
    Ok(())
}

pub fn read_epoch(path: &Path) -> Result<SignalEpoch> {
    let t = io::read_tensor(path)?;
    if t.order() != 2 {
        return Err(AtdError::Format(format!(
            "epoch file must have order 2, got {}",
            t.order()
        )));
    }
    let header = fs::read_to_string(sidecar(path))?;
    let rate = header
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "sample_rate")
        .ok_or_else(|| AtdError::Format("epoch header lacks sample_rate".into()))?
        .1
        .trim()
        .parse::<f64>()
        .map_err(|e| AtdError::Format(format!("sample_rate: {e}")))?;
    let (c, s) = (t.shape()[0], t.shape()[1]);
    let data = Array2::from_shape_vec((c, s), t.into_data()).map_err(|e| AtdError::Shape(e.to_string()))?;
    SignalEpoch::new(data, rate)
}
