//! Steady-state kernels: continuous Lyapunov equations for small dense
//! systems and stabilising-root selection for scalar quadratic Riccati
//! equations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest state dimension handled by [`solve_lyapunov`].
pub const MAX_LYAPUNOV_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("unstable dynamics: eigenvalue with real part {0:e} is not strictly negative")]
    UnstableDynamics(f64),
    #[error("singular linear system")]
    Singular,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("Q is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("complex roots (discriminant {0:e})")]
    ComplexRoots(f64),
    #[error("degenerate quadratic: leading coefficient is zero")]
    Degenerate,
    #[error("both roots destabilising")]
    BothDestabilizing,
    #[error("stabilising root {stable} is not the larger root {larger}")]
    WrongBranch { stable: f64, larger: f64 },
}

/// `A·P + P·Aᵀ + Q = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovProblem {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl LyapunovProblem {
    pub fn new(a: DMatrix<f64>, q: DMatrix<f64>) -> Self {
        Self { a, q }
    }

    /// Builds `Q = B·Bᵀ`.
    pub fn from_input(a: DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let q = b * b.transpose();
        Self { a, q }
    }

    /// Max-norm of `A·P + P·Aᵀ + Q`.
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        (&self.a * p + p * self.a.transpose() + &self.q).amax()
    }
}

/// Eigenvalues of a small real matrix, real parts only.
fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)];
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.is_square() && max_real_eigenvalue(a) < 0.0
}

/// Solves the continuous Lyapunov equation by vectorisation.
///
/// With column-major `vec`, `vec(A·P + P·Aᵀ) = (I⊗A + A⊗I)·vec(P)`, which is an
/// `n²×n²` dense system for `n ≤ 4`.
pub fn solve_lyapunov(problem: &LyapunovProblem) -> Result<DMatrix<f64>, SolverError> {
    let LyapunovProblem { a, q } = problem;
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) || n == 0 || n > MAX_LYAPUNOV_DIM {
        return Err(SolverError::Shape(format!(
            "A is {}x{}, Q is {}x{} (need square, equal, n ≤ {MAX_LYAPUNOV_DIM})",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-12 * (1.0 + q.amax()) {
        return Err(SolverError::NotSymmetric(asym));
    }
    let worst = max_real_eigenvalue(a);
    if worst.is_nan() || worst >= 0.0 {
        return Err(SolverError::UnstableDynamics(worst));
    }
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, -q[(0, 0)] / (2.0 * a[(0, 0)])));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = op.lu().solve(&rhs).ok_or(SolverError::Singular)?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Which sign of the linearised dynamics makes a Riccati root stabilising.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityForm {
    /// Covariance form: closed-loop coefficient `b/2 + a·P` must be negative.
    Covariance,
    /// Information form (inverse covariance): the closed loop is
    /// `−(b/2 + a·X)`, which must be negative.
    Information,
}

/// `a·P² + b·P + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub form: StabilityForm,
}

impl ScalarQuadratic {
    pub fn new(a: f64, b: f64, c: f64, form: StabilityForm) -> Self {
        Self { a, b, c, form }
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    /// Linearised closed-loop coefficient at a root.
    pub fn closed_loop(&self, root: f64) -> f64 {
        let k = 0.5 * self.b + self.a * root;
        match self.form {
            StabilityForm::Covariance => k,
            StabilityForm::Information => -k,
        }
    }

    /// Residual relative to the size of the individual terms.
    pub fn relative_residual(&self, x: f64) -> f64 {
        let terms = [self.a * x * x, self.b * x, self.c];
        let scale = terms
            .iter()
            .map(|t| t.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        terms.iter().sum::<f64>().abs() / scale
    }

    /// Both real roots, larger first. Uses the cancellation-free form.
    pub fn roots(&self) -> Result<(f64, f64), SolverError> {
        if self.a == 0.0 {
            return Err(SolverError::Degenerate);
        }
        let disc = self.discriminant();
        if disc < 0.0 {
            return Err(SolverError::ComplexRoots(disc));
        }
        let sq = disc.sqrt();
        let q = -0.5 * (self.b + self.b.signum() * sq);
        let (r1, r2) = if q == 0.0 {
            (0.0, 0.0)
        } else {
            (q / self.a, self.c / q)
        };
        Ok(if r1 >= r2 { (r1, r2) } else { (r2, r1) })
    }
}

/// Picks the larger root and asserts it is stabilising.
///
/// A stabilising smaller root is reported as [`SolverError::WrongBranch`]
/// rather than silently returned.
pub fn stabilizing_root(q: &ScalarQuadratic) -> Result<f64, SolverError> {
    let (larger, smaller) = q.roots()?;
    if q.closed_loop(larger) < 0.0 {
        Ok(larger)
    } else if q.closed_loop(smaller) < 0.0 {
        Err(SolverError::WrongBranch {
            stable: smaller,
            larger,
        })
    } else {
        Err(SolverError::BothDestabilizing)
    }
}
