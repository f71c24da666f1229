//! Class-structured synthetic tensors: each sample is a Kruskal slice of a
//! coefficient vector drawn around its class centroid, plus Gaussian noise.

use ndarray::Axis;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bases::KruskalBases;
use crate::error::{invalid, AtdError, Result};
use crate::kernels::kruskal_reconstruct;
use crate::rng;
use crate::solver::ridge_coefficients;
use crate::tensor::{DenseTensor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dims: [usize; 3],
    pub rank: usize,
    /// One row per class, `rank` columns.
    pub centroids: Matrix,
    /// Within-class standard deviation of the coefficients.
    pub tau: f64,
    /// Standard deviation of the elementwise noise.
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with centroids drawn as `scale · N(0, I)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        dims: [usize; 3],
        rank: usize,
        classes: usize,
        scale: f64,
        tau: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            n,
            dims,
            rank,
            centroids: random_centroids(classes, rank, scale, seed),
            tau,
            sigma,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn classes(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.dims.contains(&0) {
            return Err(invalid("dims", format!("extents must be ≥ 1, got {:?}", self.dims)));
        }
        if self.rank == 0 || self.centroids.ncols() != self.rank {
            return Err(invalid(
                "rank",
                format!(
                    "centroids have {} columns, rank is {}",
                    self.centroids.ncols(),
                    self.rank
                ),
            ));
        }
        if self.centroids.nrows() == 0 {
            return Err(invalid("classes", "need at least one class"));
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(AtdError::NonFinite("centroids".into()));
        }
        for a in 0..self.centroids.nrows() {
            for b in a + 1..self.centroids.nrows() {
                if self.centroids.row(a) == self.centroids.row(b) {
                    return Err(invalid("centroids", format!("classes {a} and {b} share a centroid")));
                }
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("must be ≥ 0, got {}", self.tau)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be ≥ 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

pub fn random_centroids(classes: usize, rank: usize, scale: f64, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, &[rng::TAG_SYNTH, 0]);
    Matrix::from_shape_simple_fn((classes, rank), || scale * r.sample::<f64, _>(StandardNormal))
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub tensor: DenseTensor,
    /// Class of each sample, `0..classes`, assigned round-robin.
    pub labels: Vec<usize>,
    pub bases: KruskalBases,
    pub coeffs: Matrix,
    /// `‖ε‖²` of the noise actually added.
    pub noise_sq: f64,
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, &[rng::TAG_SYNTH, 1]);
    let mut factor = |rows: usize| -> Matrix {
        let mut f = Matrix::from_shape_simple_fn((rows, spec.rank), || r.sample::<f64, _>(StandardNormal));
        for mut col in f.axis_iter_mut(Axis(1)) {
            let n = col.dot(&col).sqrt();
            col.mapv_inplace(|v| v / n);
        }
        f
    };
    let bases = KruskalBases::new(factor(spec.dims[0]), factor(spec.dims[1]), factor(spec.dims[2]))?;
    let m = spec.classes();
    let labels: Vec<usize> = (0..spec.n).map(|i| i % m).collect();
    let mut r = rng::stream(spec.seed, &[rng::TAG_SYNTH, 2]);
    let coeffs = Matrix::from_shape_fn((spec.n, spec.rank), |(i, c)| {
        spec.centroids[[labels[i], c]] + spec.tau * r.sample::<f64, _>(StandardNormal)
    });
    let clean = kruskal_reconstruct(Some(&coeffs), &bases.factors())?;
    let mut r = rng::stream(spec.seed, &[rng::TAG_SYNTH, 3]);
    let mut noise_sq = 0.0;
    let data: Vec<f64> = clean
        .data()
        .iter()
        .map(|&v| {
            let e = spec.sigma * r.sample::<f64, _>(StandardNormal);
            noise_sq += e * e;
            v + e
        })
        .collect();
    Ok(Synthetic {
        tensor: DenseTensor::new(clean.shape().to_vec(), data)?,
        labels,
        bases,
        coeffs,
        noise_sq,
    })
}

/// Ridge features of arbitrary samples. An order-3 tensor is one sample.
pub fn extract_features(t: &DenseTensor, bases: &KruskalBases, alpha: f64) -> Result<Matrix> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    if t.order() == 3 {
        let mut shape = vec![1];
        shape.extend_from_slice(t.shape());
        return ridge_coefficients(&DenseTensor::new(shape, t.data().to_vec())?, bases, alpha);
    }
    ridge_coefficients(t, bases, alpha)
}

/// `‖T − ⟦f(T), A, B, C⟧‖ / ‖T‖` with ridge features `f`.
pub fn relative_fit_error(t: &DenseTensor, bases: &KruskalBases, alpha: f64) -> Result<f64> {
    let x = extract_features(t, bases, alpha)?;
    let rec = kruskal_reconstruct(Some(&x), &bases.factors())?;
    Ok((t.sub(&rec)?.frobenius_norm_sq() / t.frobenius_norm_sq()).sqrt())
}
