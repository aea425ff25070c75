//! Built-in benchmark problems.
//!
//! * `lshape`: `mu(t) = 1 + exp(-t)` on the L-shaped domain with the singular
//!   exact solution `u = r^{2/3} sin(2 phi / 3) (1 - x^2)(1 - y^2) cos(phi)`,
//!   `phi` in `[0, 2 pi)`. The right-hand side is `f = 0`,
//!   `f_vec = A(grad u)`, which makes `u` the weak solution.
//! * `zshape`: `mu(t) = 1 + log(1 + t) / (1 + t)` on the Z-shaped domain with
//!   `f = 1`, `f_vec = 0`. No exact solution is known.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::ProblemData;
use crate::mesh::{make_domain, Mesh, Point};
use crate::nonlinearity::ScalarNonlinearity;

#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub initial_mesh: Mesh,
    pub nonlinearity: ScalarNonlinearity,
    pub data: ProblemData,
}

pub const PROBLEM_NAMES: [&str; 2] = ["lshape", "zshape"];

pub fn builtin_problem(name: &str) -> Result<Problem> {
    let nonlinearity = ScalarNonlinearity::builtin(name)?;
    let (initial_mesh, data) = match name {
        "lshape" => {
            let n = nonlinearity.clone();
            let f_vec = move |x: Point| n.flux(lshape_gradient(x));
            let data = ProblemData::new(Arc::new(|_| 0.0), Arc::new(f_vec))
                .with_exact(Arc::new(lshape_solution), Arc::new(lshape_gradient));
            (make_domain("lshape")?, data)
        }
        "zshape" => (make_domain("zshape")?, ProblemData::constant(1.0, [0.0, 0.0])),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(Problem { name: name.to_string(), initial_mesh, nonlinearity, data })
}

fn polar([x, y]: Point) -> (f64, f64) {
    let phi = y.atan2(x);
    (x.hypot(y), if phi < 0.0 { phi + 2.0 * PI } else { phi })
}

pub fn lshape_solution(p: Point) -> f64 {
    let [x, y] = p;
    let (r, phi) = polar(p);
    r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).sin() * phi.cos() * (1.0 - x * x) * (1.0 - y * y)
}

/// Analytic gradient of [`lshape_solution`]; unbounded at the origin.
pub fn lshape_gradient(p: Point) -> [f64; 2] {
    let [x, y] = p;
    let (r, phi) = polar(p);
    if r == 0.0 {
        return [f64::INFINITY, f64::INFINITY];
    }
    let (s, c) = phi.sin_cos();
    let (s23, c23) = (2.0 * phi / 3.0).sin_cos();
    let g = s23 * c;
    let dg = 2.0 / 3.0 * c23 * c - s23 * s;
    let r13 = r.powf(-1.0 / 3.0);
    // radial and angular derivatives of S = r^{2/3} g(phi)
    let (sr, sphi) = (2.0 / 3.0 * r13 * g, r13 * dg);
    let grad_s = [sr * c - sphi * s, sr * s + sphi * c];
    let big_s = r.powf(2.0 / 3.0) * g;
    let b = (1.0 - x * x) * (1.0 - y * y);
    let grad_b = [-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x)];
    [b * grad_s[0] + big_s * grad_b[0], b * grad_s[1] + big_s * grad_b[1]]
}
