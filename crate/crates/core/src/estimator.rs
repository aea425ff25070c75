//! Residual error indicators
//!
//! `eta_T^2 = |T|^2 (Pi f)^2 + |T|^{1/2} sum_{E interior} |E| [[(A(grad u) - Pi f_vec) . n]]^2`
//!
//! where `Pi` is the elementwise mean. For P1 functions the flux is constant
//! per triangle, so the volume residual reduces to the mean of `f` and each
//! edge jump is constant along the edge.

use crate::error::{Error, Result};
use crate::fem::{DiscreteProblem, FeFunction};
use crate::mesh::MarkedSet;

/// Squared indicators, one per triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    values: Vec<f64>,
}

impl IndicatorField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NonFinite(format!("squared indicator {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>().sqrt()
    }

    pub fn restricted(&self, subset: &MarkedSet) -> Result<f64> {
        let mut sum = 0.0;
        for &t in subset.indices() {
            sum += *self.values.get(t).ok_or(Error::IndexOutOfRange { index: t, len: self.values.len() })?;
        }
        Ok(sum.sqrt())
    }
}

pub fn indicators(problem: &DiscreteProblem, u: &FeFunction) -> Result<IndicatorField> {
    indicators_with_jump(problem, u, |a, b| [a[0] - b[0], a[1] - b[1]])
}

/// Indicators with a caller-supplied jump operator; used to check that the
/// property suites detect a corrupted estimator.
pub fn indicators_with_jump(
    problem: &DiscreteProblem,
    u: &FeFunction,
    jump: impl Fn([f64; 2], [f64; 2]) -> [f64; 2],
) -> Result<IndicatorField> {
    let dofs = problem.dofs();
    if !std::sync::Arc::ptr_eq(u.dofs(), dofs) {
        return Err(Error::DimensionMismatch { expected: dofs.num_dofs(), got: u.coeffs().len() });
    }
    let mesh = dofs.mesh();
    let n = problem.nonlinearity();
    let (f_mean, f_vec_mean) = (problem.f_mean(), problem.f_vec_mean());
    let nt = mesh.num_triangles();

    let sigma: Vec<[f64; 2]> = (0..nt)
        .map(|t| {
            let a = n.flux(u.gradient(t));
            [a[0] - f_vec_mean[t][0], a[1] - f_vec_mean[t][1]]
        })
        .collect();
    let mut values: Vec<f64> = (0..nt).map(|t| (dofs.area(t) * f_mean[t]).powi(2)).collect();
    let vertices = mesh.vertices();
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        let (t1, Some(t2)) = mesh.edge_triangles(e) else { continue };
        let (pa, pb) = (vertices[a], vertices[b]);
        let tangent = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = tangent[0].hypot(tangent[1]);
        let normal = [tangent[1] / len, -tangent[0] / len];
        let j = jump(sigma[t1], sigma[t2]);
        let jn = j[0] * normal[0] + j[1] * normal[1];
        let edge_term = len * jn * jn;
        values[t1] += dofs.area(t1).sqrt() * edge_term;
        values[t2] += dofs.area(t2).sqrt() * edge_term;
    }
    IndicatorField::new(values)
}
