use ndarray::{array, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::epoch::SignalEpoch;
use crate::error::{invalid, AtdError, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterKind {
    /// Independent `U[−1, 1]` noise on every sample.
    High,
    /// Coarse `U[−1, 1]` noise on ~1/100 of the samples, linearly interpolated.
    Low,
    Both,
}

/// Interpolation nodes used by the low-frequency jitter: `⌈samples/100⌉`, but at
/// least two so the noise spans the whole epoch.
pub(crate) fn low_nodes(samples: usize) -> usize {
    samples.div_ceil(100).max(2)
}

/// Node `k` of `m` sits at sample position `k·(L−1)/(m−1)`.
fn interpolate(nodes: &[f64], len: usize) -> Vec<f64> {
    let m = nodes.len();
    let span = (len - 1) as f64 / (m - 1) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 / span;
            let k = (pos.floor() as usize).min(m - 2);
            let w = pos - k as f64;
            nodes[k] * (1.0 - w) + nodes[k + 1] * w
        })
        .collect()
}

pub fn jitter(e: &SignalEpoch, d: f64, kind: JitterKind, seed: u64) -> Result<SignalEpoch> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(invalid("d", format!("must be ≥ 0, got {d}")));
    }
    let mut data = e.data().clone();
    let len = e.samples();
    for (c, mut row) in data.rows_mut().into_iter().enumerate() {
        let mut r = rng::stream(seed, &[c as u64]);
        if matches!(kind, JitterKind::High | JitterKind::Both) {
            row.mapv_inplace(|v| v + d * r.random_range(-1.0..=1.0));
        }
        if matches!(kind, JitterKind::Low | JitterKind::Both) {
            let nodes: Vec<f64> = (0..low_nodes(len)).map(|_| r.random_range(-1.0..=1.0)).collect();
            for (v, n) in row.iter_mut().zip(interpolate(&nodes, len)) {
                *v += d * n;
            }
        }
    }
    Ok(e.with_data(data))
}

/// Swaps the two pieces around `split`; `split = samples` is the identity.
pub fn time_rotation(e: &SignalEpoch, split: usize) -> Result<SignalEpoch> {
    let n = e.samples();
    if split > n {
        return Err(invalid("split", format!("{split} exceeds {n} samples")));
    }
    let split = split % n;
    let src = e.data();
    let data = Array2::from_shape_fn(src.dim(), |(c, s)| src[[c, (s + split) % n]]);
    Ok(e.with_data(data))
}

fn check_rotation(rot: &Matrix) -> Result<()> {
    if rot.dim() != (3, 3) {
        return Err(AtdError::Shape(format!("rotation must be 3×3, got {:?}", rot.dim())));
    }
    let err = (rot.t().dot(rot) - Matrix::eye(3))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if err > 1e-10 {
        return Err(invalid("rot", format!("not orthogonal (max |RᵀR − I| = {err:.2e})")));
    }
    let det = rot[[0, 0]] * (rot[[1, 1]] * rot[[2, 2]] - rot[[1, 2]] * rot[[2, 1]])
        - rot[[0, 1]] * (rot[[1, 0]] * rot[[2, 2]] - rot[[1, 2]] * rot[[2, 0]])
        + rot[[0, 2]] * (rot[[1, 0]] * rot[[2, 1]] - rot[[1, 1]] * rot[[2, 0]]);
    if (det - 1.0).abs() > 1e-10 {
        return Err(invalid("rot", format!("determinant is {det}, expected 1")));
    }
    Ok(())
}

/// Rotates each consecutive `(x, y, z)` channel triple at every time step.
pub fn rotation3d(e: &SignalEpoch, rot: &Matrix) -> Result<SignalEpoch> {
    check_rotation(rot)?;
    if !e.channels().is_multiple_of(3) {
        return Err(invalid(
            "e",
            format!("{} channels is not a multiple of 3", e.channels()),
        ));
    }
    let src = e.data();
    let mut data = src.clone();
    for g in 0..e.channels() / 3 {
        for s in 0..e.samples() {
            for i in 0..3 {
                data[[3 * g + i, s]] = (0..3).map(|j| rot[[i, j]] * src[[3 * g + j, s]]).sum();
            }
        }
    }
    Ok(e.with_data(data))
}

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
pub fn rotation_from_seed(seed: u64) -> Matrix {
    let mut r = rng::stream(seed, &[]);
    let mut q: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n);
    let [w, x, y, z] = q;
    array![
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y)
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x)
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y)
        ],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(channels: usize, samples: usize) -> SignalEpoch {
        SignalEpoch::new(
            Matrix::from_shape_fn((channels, samples), |(c, s)| (c as f64 + 1.0) * (s as f64 * 0.37).sin()),
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_degree_is_identity() {
        let e = ramp(2, 50);
        for k in [JitterKind::High, JitterKind::Low, JitterKind::Both] {
            assert_eq!(jitter(&e, 0.0, k, 1).unwrap(), e);
        }
    }

    #[test]
    fn high_jitter_is_bounded_and_centered() {
        let e = SignalEpoch::new(Matrix::zeros((1, 10_000)), 100.0).unwrap();
        let out = jitter(&e, 0.1, JitterKind::High, 4).unwrap();
        let diff = out.data();
        assert!(diff.iter().all(|v| v.abs() <= 0.1));
        assert!(diff.mean().unwrap().abs() < 0.01);
    }

    #[test]
    fn low_jitter_is_piecewise_linear() {
        let e = ramp(1, 1000);
        let out = jitter(&e, 0.2, JitterKind::Low, 7).unwrap();
        let diff: Vec<f64> = (out.data() - e.data()).row(0).to_vec();
        assert!(diff.iter().all(|v| v.abs() <= 0.2 + 1e-12));
        let nodes = low_nodes(1000);
        let span = 999.0 / (nodes - 1) as f64;
        for k in 0..nodes - 1 {
            let lo = (k as f64 * span).ceil() as usize;
            let hi = (((k + 1) as f64) * span).floor() as usize;
            for i in lo + 1..hi {
                // second difference vanishes inside an interval
                let dd = diff[i + 1] - 2.0 * diff[i] + diff[i - 1];
                assert!(dd.abs() < 1e-12, "interval {k}, index {i}: {dd}");
            }
        }
    }

    #[test]
    fn rotation_cases() {
        let e = SignalEpoch::new(array![[1.0, 2.0, 3.0, 4.0]], 1.0).unwrap();
        assert_eq!(time_rotation(&e, 2).unwrap().data(), &array![[3.0, 4.0, 1.0, 2.0]]);
        assert_eq!(time_rotation(&e, 4).unwrap(), e);
        let e = ramp(3, 17);
        let back = time_rotation(&time_rotation(&e, 5).unwrap(), 12).unwrap();
        assert_eq!(back, e);
        assert!(time_rotation(&e, 18).is_err());
    }

    #[test]
    fn rotation3d_cases() {
        let e = ramp(6, 20);
        assert_eq!(rotation3d(&e, &Matrix::eye(3)).unwrap(), e);
        let rz = array![[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let unit = SignalEpoch::new(array![[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        assert_eq!(
            rotation3d(&unit, &rz).unwrap().data(),
            &array![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]
        );
        let rot = rotation_from_seed(11);
        let out = rotation3d(&e, &rot).unwrap();
        for g in 0..2 {
            for s in 0..20 {
                let n = |m: &Matrix| (0..3).map(|i| m[[3 * g + i, s]].powi(2)).sum::<f64>().sqrt();
                assert!((n(out.data()) - n(e.data())).abs() < 1e-12);
            }
        }
        assert!(rotation3d(&ramp(4, 5), &rot).is_err());
        assert!(rotation3d(&e, &(Matrix::eye(3) * 2.0)).is_err());
        let reflect = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(rotation3d(&e, &reflect).is_err());
    }
}
