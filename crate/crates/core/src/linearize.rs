//! One linearization step `u -> Phi(u)`: the solution `w` of
//! `a(u; w, v) = a(u; u, v) + F(v) - <A(u), v>` for all `v`.
//!
//! | method         | `a(u; w, v)`                              |
//! |----------------|-------------------------------------------|
//! | Zarantonello   | `delta^{-1} (grad w, grad v)`             |
//! | Kačanov        | `(mu(abs(grad u)^2) grad w, grad v)`      |
//! | damped Newton  | `delta^{-1} (dA(grad u) grad w, grad v)`  |
//!
//! For Kačanov the right-hand side collapses to `F(v)`.

use std::fmt;
use std::str::FromStr;

use crate::algsolver::direct_solve;
use crate::error::{Error, Result};
use crate::fem::{assemble_weighted_stiffness, DiscreteProblem, ElementWeights, FeFunction};
use crate::nonlinearity::ScalarNonlinearity;
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearizationMethod {
    Zarantonello { delta: f64 },
    Kacanov,
    Newton { delta: f64 },
}

impl FromStr for LinearizationMethod {
    type Err = Error;

    /// `kacanov`, `zarantonello:<delta>` or `newton:<delta>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_delta = |d: &str| -> Result<f64> {
            let delta: f64 = d.trim().parse().map_err(|_| Error::InvalidMethod(format!("bad damping `{d}`")))?;
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidMethod(format!("damping must be positive, got {delta}")));
            }
            Ok(delta)
        };
        match s.split_once(':') {
            None if s == "kacanov" => Ok(Self::Kacanov),
            Some(("zarantonello", d)) => Ok(Self::Zarantonello { delta: parse_delta(d)? }),
            Some(("newton", d)) => Ok(Self::Newton { delta: parse_delta(d)? }),
            _ => Err(Error::InvalidMethod(format!(
                "`{s}` (expected kacanov, zarantonello:<delta> or newton:<delta>)"
            ))),
        }
    }
}

impl fmt::Display for LinearizationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zarantonello { delta } => write!(f, "zarantonello:{delta}"),
            Self::Kacanov => write!(f, "kacanov"),
            Self::Newton { delta } => write!(f, "newton:{delta}"),
        }
    }
}

impl LinearizationMethod {
    /// Damped Newton with `delta = min(1, C'_ell / L)`, the middle of the
    /// admissible window `(0, 2 C'_ell / L)`.
    pub fn newton_default(n: &ScalarNonlinearity) -> Self {
        let (c_ell, _) = n.jacobian_bounds();
        Self::Newton { delta: (c_ell / n.lipschitz()).min(1.0) }
    }

    /// Checks the damping window that makes the step energy-coercive.
    pub fn validate(&self, n: &ScalarNonlinearity) -> Result<()> {
        match *self {
            Self::Kacanov => Ok(()),
            Self::Zarantonello { delta } => {
                let max = 2.0 / n.lipschitz();
                if delta > 0.0 && delta < max {
                    Ok(())
                } else {
                    Err(Error::InvalidMethod(format!("zarantonello damping {delta} outside (0, {max})")))
                }
            }
            Self::Newton { delta } => {
                let (c_ell, _) = n.jacobian_bounds();
                let max = 2.0 * c_ell / n.lipschitz();
                if delta > 0.0 && delta < max {
                    Ok(())
                } else {
                    Err(Error::InvalidMethod(format!("newton damping {delta} outside (0, {max})")))
                }
            }
        }
    }

    /// Constant `C` with `C ||Phi(u) - u||^2 <= dl2(Phi(u), u)`.
    pub fn coercivity_constant(&self, n: &ScalarNonlinearity) -> f64 {
        match *self {
            Self::Zarantonello { delta } => 1.0 / delta - n.lipschitz() / 2.0,
            Self::Kacanov => n.alpha() / 2.0,
            Self::Newton { delta } => n.jacobian_bounds().0 / delta - n.lipschitz() / 2.0,
        }
    }

    /// Ellipticity and continuity constants of `a(u; ., .)` relative to the
    /// Laplace form.
    pub fn form_bounds(&self, n: &ScalarNonlinearity) -> (f64, f64) {
        match *self {
            Self::Zarantonello { delta } => (1.0 / delta, 1.0 / delta),
            Self::Kacanov => (n.alpha(), n.growth_upper()),
            Self::Newton { delta } => {
                let (lo, hi) = n.jacobian_bounds();
                (lo / delta, hi / delta)
            }
        }
    }
}

/// SPD system whose solution is `Phi(point)`.
#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    point: FeFunction,
}

impl LinearizedSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>, point: FeFunction) -> Result<Self> {
        let n = point.coeffs().len();
        if matrix.nrows() != n || rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: matrix.nrows().max(rhs.len()) });
        }
        Ok(Self { matrix, rhs, point })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Linearization point.
    pub fn point(&self) -> &FeFunction {
        &self.point
    }

    /// `||v||_a = (v^T A v)^{1/2}`.
    pub fn a_norm(&self, v: &[f64]) -> f64 {
        self.matrix.bilinear(v, v).max(0.0).sqrt()
    }
}

/// Elementwise coefficient of `a(u; ., .)`.
pub fn element_weights(method: LinearizationMethod, problem: &DiscreteProblem, u: &FeFunction) -> ElementWeights {
    let n = problem.nonlinearity();
    let nt = problem.dofs().mesh().num_triangles();
    match method {
        LinearizationMethod::Zarantonello { delta } => ElementWeights::Constant(1.0 / delta),
        LinearizationMethod::Kacanov => ElementWeights::Scalar(
            (0..nt)
                .map(|t| {
                    let g = u.gradient(t);
                    n.mu(g[0] * g[0] + g[1] * g[1])
                })
                .collect(),
        ),
        LinearizationMethod::Newton { delta } => ElementWeights::Matrix(
            (0..nt)
                .map(|t| n.flux_jacobian(u.gradient(t)).map(|row| row.map(|x| x / delta)))
                .collect(),
        ),
    }
}

pub fn build_system(method: LinearizationMethod, problem: &DiscreteProblem, u_prev: &FeFunction) -> Result<LinearizedSystem> {
    let weights = element_weights(method, problem, u_prev);
    build_system_with_weights(method, problem, u_prev, &weights)
}

/// [`build_system`] with precomputed weights (to inspect them first).
pub fn build_system_with_weights(
    method: LinearizationMethod,
    problem: &DiscreteProblem,
    u_prev: &FeFunction,
    weights: &ElementWeights,
) -> Result<LinearizedSystem> {
    if !std::sync::Arc::ptr_eq(u_prev.dofs(), problem.dofs()) {
        return Err(Error::DimensionMismatch { expected: problem.dofs().num_dofs(), got: u_prev.coeffs().len() });
    }
    let matrix = assemble_weighted_stiffness(problem.dofs(), weights)?;
    let rhs = match method {
        LinearizationMethod::Kacanov => problem.load().to_vec(),
        _ => {
            let mut rhs = matrix.mul_vec(u_prev.coeffs());
            for (b, r) in rhs.iter_mut().zip(problem.residual(u_prev)?) {
                *b += r;
            }
            rhs
        }
    };
    LinearizedSystem::new(matrix, rhs, u_prev.clone())
}

/// `Phi(u_prev)` by a direct solve.
pub fn exact_step(method: LinearizationMethod, problem: &DiscreteProblem, u_prev: &FeFunction) -> Result<FeFunction> {
    direct_solve(&build_system(method, problem, u_prev)?)
}
