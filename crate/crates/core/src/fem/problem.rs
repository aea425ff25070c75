use std::fmt;
use std::sync::Arc;

use super::quadrature::{map_point, GAUSS4, TRIANGLE_RULE};
use super::{DofMap, FeFunction, Gradient};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::nonlinearity::ScalarNonlinearity;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Right-hand side `F(v) = (f, v) + (f_vec, grad v)` and, optionally, the
/// exact solution. Dirichlet data are always zero.
#[derive(Clone)]
pub struct ProblemData {
    pub f: ScalarField,
    pub f_vec: VectorField,
    pub exact: Option<ScalarField>,
    pub exact_gradient: Option<VectorField>,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData").field("has_exact", &self.exact_gradient.is_some()).finish()
    }
}

impl ProblemData {
    pub fn new(f: ScalarField, f_vec: VectorField) -> Self {
        Self { f, f_vec, exact: None, exact_gradient: None }
    }

    pub fn constant(f: f64, f_vec: [f64; 2]) -> Self {
        Self::new(Arc::new(move |_| f), Arc::new(move |_| f_vec))
    }

    pub fn with_exact(mut self, u: ScalarField, gradient: VectorField) -> Self {
        self.exact = Some(u);
        self.exact_gradient = Some(gradient);
        self
    }
}

struct LoadData {
    load: Vec<f64>,
    f_mean: Vec<f64>,
    f_vec_mean: Vec<[f64; 2]>,
}

fn integrate_data(dofs: &DofMap, data: &ProblemData) -> LoadData {
    let mesh = dofs.mesh();
    let nt = mesh.num_triangles();
    let mut load = vec![0.0; dofs.num_dofs()];
    let mut f_mean = Vec::with_capacity(nt);
    let mut f_vec_mean = Vec::with_capacity(nt);
    for t in 0..nt {
        let corners = mesh.corners(t);
        let grads = dofs.basis_gradients(t);
        let area = dofs.area(t);
        let element_dofs = dofs.element_dofs(t);
        let mut fm = 0.0;
        let mut fvm = [0.0; 2];
        let mut local = [0.0; 3];
        for (bary, w) in TRIANGLE_RULE.iter() {
            let x = map_point(&corners, bary);
            let (fv, fvec) = ((data.f)(x), (data.f_vec)(x));
            fm += w * fv;
            fvm[0] += w * fvec[0];
            fvm[1] += w * fvec[1];
            for i in 0..3 {
                local[i] += w * (fv * bary[i] + fvec[0] * grads[i][0] + fvec[1] * grads[i][1]);
            }
        }
        for (i, d) in element_dofs.iter().enumerate() {
            if let Some(d) = d {
                load[*d] += area * local[i];
            }
        }
        f_mean.push(fm);
        f_vec_mean.push(fvm);
    }
    LoadData { load, f_mean, f_vec_mean }
}

/// `F(phi_i)` for every dof, by the degree-5 element rule.
pub fn assemble_load(dofs: &DofMap, data: &ProblemData) -> Vec<f64> {
    integrate_data(dofs, data).load
}

/// Nodal interpolant at the interior vertices.
pub fn interpolate(dofs: &Arc<DofMap>, g: impl Fn(Point) -> f64) -> Result<FeFunction> {
    let vertices = dofs.mesh().vertices();
    let mut coeffs = Vec::with_capacity(dofs.num_dofs());
    for d in 0..dofs.num_dofs() {
        let v = dofs.vertex_of_dof(d);
        let value = g(vertices[v]);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{value} at vertex {v} {:?}", vertices[v])));
        }
        coeffs.push(value);
    }
    FeFunction::from_coeffs(dofs, coeffs)
}

/// `||grad u_exact - grad u||_{L2}` by the degree-5 element rule.
pub fn exact_error(data: &ProblemData, u: &FeFunction) -> Result<f64> {
    let grad = data.exact_gradient.as_ref().ok_or(Error::MissingExactSolution)?;
    let dofs = u.dofs();
    let mesh = dofs.mesh();
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let corners = mesh.corners(t);
        let gu = u.gradient(t);
        let local: f64 = TRIANGLE_RULE
            .iter()
            .map(|(bary, w)| {
                let ge = grad(map_point(&corners, bary));
                w * ((ge[0] - gu[0]).powi(2) + (ge[1] - gu[1]).powi(2))
            })
            .sum();
        sum += dofs.area(t) * local;
    }
    Ok(sum.sqrt())
}

/// Everything about one mesh that does not depend on the iterate: the dof
/// map, the load vector and the elementwise data means used by the
/// estimator.
#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    dofs: Arc<DofMap>,
    data: ProblemData,
    nonlinearity: ScalarNonlinearity,
    load: Vec<f64>,
    f_mean: Vec<f64>,
    f_vec_mean: Vec<[f64; 2]>,
}

impl DiscreteProblem {
    pub fn new(dofs: Arc<DofMap>, data: &ProblemData, nonlinearity: &ScalarNonlinearity) -> Self {
        let LoadData { load, f_mean, f_vec_mean } = integrate_data(&dofs, data);
        Self { dofs, data: data.clone(), nonlinearity: nonlinearity.clone(), load, f_mean, f_vec_mean }
    }

    pub fn dofs(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn nonlinearity(&self) -> &ScalarNonlinearity {
        &self.nonlinearity
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Elementwise mean of `f`.
    pub fn f_mean(&self) -> &[f64] {
        &self.f_mean
    }

    /// Elementwise mean of `f_vec`.
    pub fn f_vec_mean(&self) -> &[[f64; 2]] {
        &self.f_vec_mean
    }

    fn check(&self, u: &FeFunction) -> Result<()> {
        if Arc::ptr_eq(u.dofs(), &self.dofs) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dofs.num_dofs(), got: u.coeffs().len() })
        }
    }

    pub fn zero(&self) -> FeFunction {
        FeFunction::zeros(&self.dofs)
    }

    /// `E(u) = sum_T |T| M(|grad u|^2) / 2 - F(u)`.
    pub fn energy(&self, u: &FeFunction) -> Result<f64> {
        self.check(u)?;
        let n = &self.nonlinearity;
        let nt = self.dofs.mesh().num_triangles();
        let internal: f64 = (0..nt).map(|t| self.dofs.area(t) * n.energy_density(u.gradient(t))).sum();
        Ok(internal - crate::sparse::dot(&self.load, u.coeffs()))
    }

    /// `dl2(v, w) = E(w) - E(v)`, evaluated elementwise from differences so
    /// that small increments do not drown in the magnitude of `E`. Exactly
    /// antisymmetric.
    pub fn energy_difference(&self, v: &FeFunction, w: &FeFunction) -> Result<f64> {
        self.check(v)?;
        self.check(w)?;
        let nt = self.dofs.mesh().num_triangles();
        let mut internal = 0.0;
        for t in 0..nt {
            internal += self.dofs.area(t) * 0.5 * self.density_difference(v.gradient(t), w.gradient(t));
        }
        let external: f64 = self.load.iter().zip(w.coeffs().iter().zip(v.coeffs())).map(|(l, (a, b))| l * (a - b)).sum();
        Ok(internal - external)
    }

    // M(|gw|^2) - M(|gv|^2)
    fn density_difference(&self, gv: Gradient, gw: Gradient) -> f64 {
        let n = &self.nonlinearity;
        let h = (gw[0] - gv[0]) * (gw[0] + gv[0]) + (gw[1] - gv[1]) * (gw[1] + gv[1]);
        if h == 0.0 {
            return 0.0;
        }
        if h.abs() <= 1e-2 {
            let low = if h > 0.0 { gv } else { gw };
            let low = low[0] * low[0] + low[1] * low[1];
            h * GAUSS4.iter().map(|(x, wt)| wt * n.mu(low + x * h.abs())).sum::<f64>()
        } else {
            n.antiderivative(gw[0] * gw[0] + gw[1] * gw[1]) - n.antiderivative(gv[0] * gv[0] + gv[1] * gv[1])
        }
    }

    /// `r_i = F(phi_i) - sum_T |T| A(grad u) . grad phi_i`.
    pub fn residual(&self, u: &FeFunction) -> Result<Vec<f64>> {
        self.check(u)?;
        let mut r = self.load.clone();
        for t in 0..self.dofs.mesh().num_triangles() {
            let flux = self.nonlinearity.flux(u.gradient(t));
            let grads = self.dofs.basis_gradients(t);
            let area = self.dofs.area(t);
            for (i, d) in self.dofs.element_dofs(t).iter().enumerate() {
                if let Some(d) = d {
                    r[*d] -= area * (flux[0] * grads[i][0] + flux[1] * grads[i][1]);
                }
            }
        }
        Ok(r)
    }

    pub fn exact_error(&self, u: &FeFunction) -> Result<f64> {
        self.check(u)?;
        exact_error(&self.data, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{energy_norm, laplace_matrix};
    use crate::mesh::{make_domain, Mesh};

    fn dofs_on(mesh: Mesh) -> Arc<DofMap> {
        Arc::new(DofMap::new(Arc::new(mesh)))
    }

    fn lshape() -> ScalarNonlinearity {
        ScalarNonlinearity::builtin("lshape").unwrap()
    }

    #[test]
    fn load_of_zero_data_is_zero() {
        let dofs = dofs_on(make_domain("lshape").unwrap().uniform_refine().uniform_refine());
        assert!(assemble_load(&dofs, &ProblemData::constant(0.0, [0.0, 0.0])).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_load_is_patch_area_over_three() {
        let dofs = dofs_on(make_domain("zshape").unwrap().uniform_refine().uniform_refine());
        let load = assemble_load(&dofs, &ProblemData::constant(1.0, [0.0, 0.0]));
        let mesh = dofs.mesh();
        let mut expected = vec![0.0; dofs.num_dofs()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &v in tri {
                if let Some(d) = dofs.dof_of_vertex(v) {
                    expected[d] += mesh.area(t) / 3.0;
                }
            }
        }
        for (a, b) in load.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_vector_load_vanishes_on_interior_patches() {
        let dofs = dofs_on(make_domain("square").unwrap().uniform_refine().uniform_refine().uniform_refine());
        let load = assemble_load(&dofs, &ProblemData::constant(0.0, [0.7, -1.3]));
        assert!(load.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn energy_of_single_triangle() {
        let mesh = Mesh::from_triangles(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]]).unwrap();
        let dofs = dofs_on(mesh);
        let n = lshape();
        // no interior dofs on one triangle; evaluate the element term directly
        let g = [1.0, 0.0];
        let e = dofs.area(0) * n.energy_density(g);
        assert!((e - 0.5 * (2.0 - (-1f64).exp()) * 0.5).abs() < 1e-15);
        assert!((e - 0.408030).abs() < 1e-6);
        let p = DiscreteProblem::new(dofs, &ProblemData::constant(1.0, [0.0, 0.0]), &n);
        assert_eq!(p.energy(&p.zero()).unwrap(), 0.0);
    }

    #[test]
    fn energy_difference_is_antisymmetric_and_additive() {
        let dofs = dofs_on(make_domain("lshape").unwrap().uniform_refine().uniform_refine());
        let p = DiscreteProblem::new(Arc::clone(&dofs), &ProblemData::constant(1.0, [0.2, 0.1]), &lshape());
        let n = dofs.num_dofs();
        let mk = |s: f64| FeFunction::from_coeffs(&dofs, (0..n).map(|i| (s * (i as f64 + 1.0)).sin()).collect()).unwrap();
        let (v, w, z) = (mk(0.3), mk(1.7), mk(2.9));
        let vw = p.energy_difference(&v, &w).unwrap();
        assert_eq!(vw, -p.energy_difference(&w, &v).unwrap());
        assert_eq!(p.energy_difference(&v, &v).unwrap(), 0.0);
        let sum = p.energy_difference(&v, &z).unwrap() + p.energy_difference(&z, &w).unwrap();
        assert!((vw - sum).abs() <= 1e-12 * vw.abs());
        let direct = p.energy(&w).unwrap() - p.energy(&v).unwrap();
        assert!((vw - direct).abs() <= 1e-12 * p.energy(&w).unwrap().abs().max(1.0));
    }

    #[test]
    fn small_increments_keep_relative_accuracy() {
        let dofs = dofs_on(make_domain("square").unwrap().uniform_refine().uniform_refine());
        let p = DiscreteProblem::new(Arc::clone(&dofs), &ProblemData::constant(1.0, [0.0, 0.0]), &lshape());
        let v = FeFunction::from_coeffs(&dofs, vec![0.3; dofs.num_dofs()]).unwrap();
        let mut w = v.clone();
        w.coeffs_mut()[0] += 1e-7;
        // second-order expansion: dl2 = -r_0 eps + a(v; e, e) eps^2 / 2 + O(eps^3)
        let eps = 1e-7;
        let r = p.residual(&v).unwrap();
        let dl2 = p.energy_difference(&v, &w).unwrap();
        let first = -r[0] * eps;
        assert!(((dl2 - first) / eps.powi(2)).abs() < 10.0);
    }

    #[test]
    fn residual_is_negative_energy_gradient() {
        let dofs = dofs_on(make_domain("zshape").unwrap().uniform_refine().uniform_refine());
        let n = ScalarNonlinearity::builtin("zshape").unwrap();
        let p = DiscreteProblem::new(Arc::clone(&dofs), &ProblemData::constant(1.0, [0.0, 0.0]), &n);
        let u = FeFunction::from_coeffs(&dofs, (0..dofs.num_dofs()).map(|i| 0.1 * (i as f64).cos()).collect()).unwrap();
        let r = p.residual(&u).unwrap();
        let h = 1e-6;
        for (i, &ri) in r.iter().enumerate() {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up.coeffs_mut()[i] += h;
            dn.coeffs_mut()[i] -= h;
            let fd = p.energy_difference(&dn, &up).unwrap() / (2.0 * h);
            assert!((fd + ri).abs() <= 1e-5 * ri.abs().max(1e-3), "dof {i}: {fd} vs {}", -ri);
        }
    }

    #[test]
    fn zero_data_zero_residual() {
        let dofs = dofs_on(make_domain("lshape").unwrap().uniform_refine());
        let p = DiscreteProblem::new(Arc::clone(&dofs), &ProblemData::constant(0.0, [0.0, 0.0]), &lshape());
        assert!(p.residual(&p.zero()).unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(p.energy(&p.zero()).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_of_affine_bubble_free_function() {
        // u = x on the square is not zero on the boundary; use a tent that is
        // affine on every triangle of the cross mesh instead
        let dofs = dofs_on(make_domain("square").unwrap().uniform_refine());
        let u = interpolate(&dofs, |[x, y]| 1.0 - 2.0 * (x - 0.5).abs().max((y - 0.5).abs())).unwrap();
        assert_eq!(u.coeffs(), &[1.0]);
        assert!((energy_norm(&u) - 2.0).abs() < 1e-14);
        let zero = interpolate(&dofs, |_| 0.0).unwrap();
        assert_eq!(zero.coeffs(), &[0.0]);
        assert!(matches!(interpolate(&dofs, |_| f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn exact_error_of_representable_solution() {
        let dofs = dofs_on(make_domain("square").unwrap().uniform_refine());
        let tent = |[x, y]: Point| 1.0 - 2.0 * (x - 0.5).abs().max((y - 0.5).abs());
        let tent_grad = |[x, y]: Point| {
            let (dx, dy) = (x - 0.5, y - 0.5);
            if dx.abs() >= dy.abs() {
                [-2.0 * dx.signum(), 0.0]
            } else {
                [0.0, -2.0 * dy.signum()]
            }
        };
        let data = ProblemData::constant(0.0, [0.0, 0.0]).with_exact(Arc::new(tent), Arc::new(tent_grad));
        let u = interpolate(&dofs, tent).unwrap();
        assert!(exact_error(&data, &u).unwrap() < 1e-14);
        let zero_err = exact_error(&data, &FeFunction::zeros(&dofs)).unwrap();
        assert!((zero_err - 2.0).abs() < 1e-14);
        assert!(matches!(
            exact_error(&ProblemData::constant(0.0, [0.0, 0.0]), &u),
            Err(Error::MissingExactSolution)
        ));
    }

    #[test]
    fn stiffness_matches_quadratic_part_of_energy() {
        // with mu = 1 + exp(-t), M(s) ~ 2 s for tiny gradients, so
        // E(eps u) ~ eps^2 u^T K u - eps F(u)
        let dofs = dofs_on(make_domain("lshape").unwrap().uniform_refine().uniform_refine());
        let p = DiscreteProblem::new(Arc::clone(&dofs), &ProblemData::constant(0.0, [0.0, 0.0]), &lshape());
        let k = laplace_matrix(&dofs);
        let c: Vec<f64> = (0..dofs.num_dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let eps = 1e-4;
        let u = FeFunction::from_coeffs(&dofs, c.iter().map(|x| eps * x).collect()).unwrap();
        let e = p.energy_difference(&p.zero(), &u).unwrap();
        let quad = eps * eps * k.bilinear(&c, &c);
        assert!((e - quad).abs() < 1e-6 * quad);
    }
}
