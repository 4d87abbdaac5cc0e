use crate::error::{Error, Result};
use crate::groups::{group_norm, GroupStructure};
use crate::linalg::{ensure_finite, ensure_finite_vec, spectral_norm, Matrix, Vector};

/// The analysis operator `D` (`n x p`); the regularizer is `|D^T x|_{1,2}`.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisOperator {
    Identity(usize),
    Matrix(Matrix),
}

impl AnalysisOperator {
    pub fn n(&self) -> usize {
        match self {
            Self::Identity(n) => *n,
            Self::Matrix(d) => d.nrows(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Self::Identity(n) => *n,
            Self::Matrix(d) => d.ncols(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity(_))
    }

    /// `D u` for `u` in the coefficient space.
    pub fn apply(&self, u: &Vector) -> Vector {
        match self {
            Self::Identity(_) => u.clone(),
            Self::Matrix(d) => d * u,
        }
    }

    /// `D^T x` for `x` in the signal space.
    pub fn apply_adjoint(&self, x: &Vector) -> Vector {
        match self {
            Self::Identity(_) => x.clone(),
            Self::Matrix(d) => d.tr_mul(x),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            Self::Identity(n) => Matrix::identity(*n, *n),
            Self::Matrix(d) => d.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Self::Identity(n) => {
                if *n == 0 {
                    0.0
                } else {
                    1.0
                }
            }
            Self::Matrix(d) => spectral_norm(d),
        }
    }
}

/// Basis pursuit instance `min |D^T x|_{1,2} s.t. Phi x = Phi x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub phi: Matrix,
    pub d: AnalysisOperator,
    pub groups: GroupStructure,
    pub x0: Vector,
    pub y0: Vector,
}

impl Problem {
    pub fn new(phi: Matrix, d: AnalysisOperator, groups: GroupStructure, x0: Vector) -> Result<Self> {
        ensure_finite(&phi, "sensing matrix")?;
        ensure_finite_vec(&x0, "candidate")?;
        if let AnalysisOperator::Matrix(m) = &d {
            ensure_finite(m, "analysis operator")?;
        }
        let n = phi.ncols();
        if x0.len() != n {
            return Err(Error::mismatch("candidate length", n, x0.len()));
        }
        if d.n() != n {
            return Err(Error::mismatch("analysis operator rows", n, d.n()));
        }
        if groups.dim() != d.p() {
            return Err(Error::mismatch("group structure dimension", d.p(), groups.dim()));
        }
        let y0 = &phi * &x0;
        Ok(Self { phi, d, groups, x0, y0 })
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn p(&self) -> usize {
        self.d.p()
    }

    /// The regularizer `J(x) = |D^T x|_{1,2}`.
    pub fn objective(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::mismatch("objective argument", self.n(), x.len()));
        }
        group_norm(&self.d.apply_adjoint(x), &self.groups)
    }

    /// `D^T` as an explicit `p x n` matrix.
    pub fn d_adjoint_matrix(&self) -> Matrix {
        match &self.d {
            AnalysisOperator::Identity(n) => Matrix::identity(*n, *n),
            AnalysisOperator::Matrix(d) => d.transpose(),
        }
    }
}
