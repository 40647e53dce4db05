//! Control-affine plant models `ẋ = f(x) + G(x)u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Control-affine dynamics `ẋ = f(x) + G(x)u`.
pub trait AffineDynamics<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Drift `f(x)`.
    fn drift(&self, x: &DVector<T>) -> DVector<T>;
    /// Input matrix `G(x)`, `state_dim × input_dim`.
    fn input_matrix(&self, x: &DVector<T>) -> DMatrix<T>;

    /// `f(x) + G(x)u`.
    fn vector_field(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.drift(x) + self.input_matrix(x) * u
    }
}

/// Cascade `ż_i = f_i(η_i) + G_i(η_i) z_{i+1}`, `η_i = (z_0, …, z_i)`, with `z_{r+1} = u`.
pub trait StrictFeedback<T: Real>: AffineDynamics<T> {
    /// Block dimensions `n_0, …, n_r`.
    fn level_dims(&self) -> Vec<usize>;
    /// `f_i(η_i)`, of length `n_i`.
    fn level_drift(&self, level: usize, eta: &DVector<T>) -> DVector<T>;
    /// `G_i(η_i)`, `n_i × n_{i+1}`.
    fn level_gain(&self, level: usize, eta: &DVector<T>) -> DMatrix<T>;
}

/// `ẋ = u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingleIntegrator {
    pub dim: usize,
}

impl<T: Real> AffineDynamics<T> for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::zeros(self.dim)
    }
    fn input_matrix(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// `ż_0 = z_1`, `ż_1 = u` with `z_0, z_1, u ∈ R^dim`; state is `(z_0, z_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoubleIntegrator {
    pub dim: usize,
}

impl<T: Real> AffineDynamics<T> for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2 * self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, x: &DVector<T>) -> DVector<T> {
        let mut f = DVector::zeros(2 * self.dim);
        f.rows_mut(0, self.dim)
            .copy_from(&x.rows(self.dim, self.dim));
        f
    }
    fn input_matrix(&self, _x: &DVector<T>) -> DMatrix<T> {
        let mut g = DMatrix::zeros(2 * self.dim, self.dim);
        g.view_mut((self.dim, 0), (self.dim, self.dim))
            .fill_with_identity();
        g
    }
}

impl<T: Real> StrictFeedback<T> for DoubleIntegrator {
    fn level_dims(&self) -> Vec<usize> {
        vec![self.dim, self.dim]
    }
    fn level_drift(&self, _level: usize, _eta: &DVector<T>) -> DVector<T> {
        DVector::zeros(self.dim)
    }
    fn level_gain(&self, _level: usize, _eta: &DVector<T>) -> DMatrix<T> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// `ẋ = A x + b + G u` with constant matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAffine<T: Real> {
    a: DMatrix<T>,
    b: DVector<T>,
    g: DMatrix<T>,
}

impl<T: Real> LinearAffine<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>, g: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || g.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if a.ncols() != n {
                    a.ncols()
                } else if b.len() != n {
                    b.len()
                } else {
                    g.nrows()
                },
            });
        }
        let rank = g.clone().svd(false, false).rank(crate::scalar::lit(1e-9));
        if rank < n {
            return Err(Error::InvalidParameter(
                "input matrix must have full row rank".into(),
            ));
        }
        Ok(Self { a, b, g })
    }
}

impl<T: Real> AffineDynamics<T> for LinearAffine<T> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.g.ncols()
    }
    fn drift(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b
    }
    fn input_matrix(&self, _x: &DVector<T>) -> DMatrix<T> {
        self.g.clone()
    }
}

type DriftFn<T> = dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync;
type GainFn<T> = dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync;

/// Dynamics given by arbitrary closures.
pub struct FnDynamics<T: Real> {
    n: usize,
    m: usize,
    f: Box<DriftFn<T>>,
    g: Box<GainFn<T>>,
}

impl<T: Real> FnDynamics<T> {
    pub fn new(
        n: usize,
        m: usize,
        f: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        g: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            m,
            f: Box::new(f),
            g: Box::new(g),
        }
    }
}

impl<T: Real> AffineDynamics<T> for FnDynamics<T> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn drift(&self, x: &DVector<T>) -> DVector<T> {
        (self.f)(x)
    }
    fn input_matrix(&self, x: &DVector<T>) -> DMatrix<T> {
        (self.g)(x)
    }
}
