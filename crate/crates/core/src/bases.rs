use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AtdError, Result};
use crate::rng;
use crate::tensor::Matrix;

/// The basis triple `{A, B, C}` of shapes `I×R`, `J×R`, `K×R`.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalBases {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl KruskalBases {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let r = a.ncols();
        if r == 0 || b.ncols() != r || c.ncols() != r {
            return Err(AtdError::Shape(format!(
                "bases ranks differ: {}, {}, {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        let bases = Self { a, b, c };
        bases.check_finite()?;
        Ok(bases)
    }

    /// i.i.d. standard normal entries scaled by `1/√R`.
    pub fn random(dims: [usize; 3], rank: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[rng::TAG_INIT]);
        let scale = 1.0 / (rank as f64).sqrt();
        let mut draw = |rows: usize| -> Matrix {
            Array2::from_shape_simple_fn((rows, rank), || {
                let z: f64 = StandardNormal.sample(&mut r);
                z * scale
            })
        };
        let (a, b, c) = (draw(dims[0]), draw(dims[1]), draw(dims[2]));
        Self::new(a, b, c)
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.nrows(), self.b.nrows(), self.c.nrows()]
    }

    pub fn factors(&self) -> [&Matrix; 3] {
        [&self.a, &self.b, &self.c]
    }

    pub fn factor(&self, id: FactorId) -> &Matrix {
        match id {
            FactorId::A => &self.a,
            FactorId::B => &self.b,
            FactorId::C => &self.c,
        }
    }

    pub fn factor_mut(&mut self, id: FactorId) -> &mut Matrix {
        match id {
            FactorId::A => &mut self.a,
            FactorId::B => &mut self.b,
            FactorId::C => &mut self.c,
        }
    }

    /// `‖A‖², ‖B‖², ‖C‖²`.
    pub fn norms_sq(&self) -> [f64; 3] {
        self.factors().map(|f| f.iter().map(|v| v * v).sum())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, f) in ["A", "B", "C"].iter().zip(self.factors()) {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(AtdError::NonFinite(format!("basis {name}")));
            }
        }
        Ok(())
    }
}

/// Which basis factor a main step updates. The tensor mode is `index() + 1`
/// since mode 0 of a data tensor indexes samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorId {
    A,
    B,
    C,
}

impl FactorId {
    pub const ALL: [FactorId; 3] = [FactorId::A, FactorId::B, FactorId::C];

    pub fn index(self) -> usize {
        match self {
            FactorId::A => 0,
            FactorId::B => 1,
            FactorId::C => 2,
        }
    }

    pub fn mode(self) -> usize {
        self.index() + 1
    }
}
