//! Lowest-order Lagrange elements with homogeneous Dirichlet conditions.
//!
//! Unknowns live on interior vertices only. Gradients of P1 functions are
//! constant on each triangle, so stiffness assembly with elementwise-constant
//! weights is exact and needs no quadrature.

mod problem;
pub(crate) mod quadrature;

use std::sync::Arc;

pub use problem::{assemble_load, exact_error, interpolate, DiscreteProblem, ProblemData, ScalarField, VectorField};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NONE};
use crate::sparse::CsrMatrix;

pub type Gradient = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Degrees of freedom of the P1 space on one mesh, plus the geometric data and
/// sparsity pattern shared by every assembly on that mesh.
#[derive(Debug)]
pub struct DofMap {
    mesh: Arc<Mesh>,
    vertex_dof: Vec<usize>,
    dof_vertex: Vec<usize>,
    areas: Vec<f64>,
    basis_gradients: Vec<[Gradient; 3]>,
    pattern: CsrMatrix,
    // CSR position of local pair (i, j) at index 3 i + j; NONE if either
    // vertex is on the boundary
    slots: Vec<[usize; 9]>,
}

impl DofMap {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let on_boundary = mesh.is_boundary_vertex();
        let mut vertex_dof = vec![NONE; mesh.num_vertices()];
        let mut dof_vertex = Vec::new();
        for (v, &b) in on_boundary.iter().enumerate() {
            if !b {
                vertex_dof[v] = dof_vertex.len();
                dof_vertex.push(v);
            }
        }
        let n = dof_vertex.len();

        let mut areas = Vec::with_capacity(mesh.num_triangles());
        let mut basis_gradients = Vec::with_capacity(mesh.num_triangles());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let [p0, p1, p2] = mesh.corners(t);
            let area = mesh.area(t);
            let s = 0.5 / area;
            areas.push(area);
            basis_gradients.push([
                [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
            ]);
            for &a in tri {
                if vertex_dof[a] == NONE {
                    continue;
                }
                for &b in tri {
                    if vertex_dof[b] != NONE {
                        rows[vertex_dof[a]].push(vertex_dof[b]);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let pattern = CsrMatrix::from_pattern(n, row_ptr, col_idx);
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [NONE; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        let (di, dj) = (vertex_dof[tri[i]], vertex_dof[tri[j]]);
                        if di != NONE && dj != NONE {
                            s[3 * i + j] = pattern.position(di, dj).expect("pattern covers element pairs");
                        }
                    }
                }
                s
            })
            .collect();
        Self { mesh, vertex_dof, dof_vertex, areas, basis_gradients, pattern, slots }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_vertex.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        let d = self.vertex_dof[v];
        (d != NONE).then_some(d)
    }

    pub fn vertex_of_dof(&self, d: usize) -> usize {
        self.dof_vertex[d]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> &[Gradient; 3] {
        &self.basis_gradients[t]
    }

    /// Dof of each local vertex of `t` (`None` on the boundary).
    pub fn element_dofs(&self, t: usize) -> [Option<usize>; 3] {
        self.mesh.triangles()[t].map(|v| self.dof_of_vertex(v))
    }

    /// Zero matrix with the stiffness sparsity pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// Gradient on triangle `t` of the P1 function with coefficients `coeffs`.
    pub fn gradient(&self, t: usize, coeffs: &[f64]) -> Gradient {
        let tri = &self.mesh.triangles()[t];
        let grads = &self.basis_gradients[t];
        let mut g = [0.0; 2];
        for i in 0..3 {
            let d = self.vertex_dof[tri[i]];
            if d != NONE {
                g[0] += coeffs[d] * grads[i][0];
                g[1] += coeffs[d] * grads[i][1];
            }
        }
        g
    }
}

/// A P1 function vanishing on the boundary.
#[derive(Clone, Debug)]
pub struct FeFunction {
    dofs: Arc<DofMap>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(dofs: &Arc<DofMap>) -> Self {
        Self { dofs: Arc::clone(dofs), coeffs: vec![0.0; dofs.num_dofs()] }
    }

    pub fn from_coeffs(dofs: &Arc<DofMap>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dofs.num_dofs() {
            return Err(Error::DimensionMismatch { expected: dofs.num_dofs(), got: coeffs.len() });
        }
        Ok(Self { dofs: Arc::clone(dofs), coeffs })
    }

    pub fn dofs(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn gradient(&self, t: usize) -> Gradient {
        self.dofs.gradient(t, &self.coeffs)
    }

    pub fn same_space(&self, other: &FeFunction) -> bool {
        Arc::ptr_eq(&self.dofs, &other.dofs)
    }

    pub(crate) fn check_same_space(&self, other: &FeFunction) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.coeffs.len(), got: other.coeffs.len() })
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        self.check_same_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { dofs: Arc::clone(&self.dofs), coeffs })
    }

    pub fn scaled(&self, c: f64) -> FeFunction {
        Self { dofs: Arc::clone(&self.dofs), coeffs: self.coeffs.iter().map(|a| c * a).collect() }
    }

    /// Values at all mesh vertices, zero on the boundary.
    pub fn nodal_values(&self) -> Vec<f64> {
        (0..self.dofs.mesh().num_vertices())
            .map(|v| self.dofs.dof_of_vertex(v).map_or(0.0, |d| self.coeffs[d]))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// `||grad u||_{L2}`.
pub fn energy_norm(u: &FeFunction) -> f64 {
    let dofs = u.dofs();
    (0..dofs.mesh().num_triangles())
        .map(|t| {
            let g = u.gradient(t);
            dofs.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum::<f64>()
        .sqrt()
}

/// `||grad (u - v)||_{L2}`.
pub fn energy_norm_of_difference(u: &FeFunction, v: &FeFunction) -> Result<f64> {
    Ok(energy_norm(&u.sub(v)?))
}

/// Elementwise-constant coefficient of a stiffness form.
#[derive(Clone, Debug)]
pub enum ElementWeights {
    Constant(f64),
    Scalar(Vec<f64>),
    /// Symmetric positive definite 2x2 matrices.
    Matrix(Vec<Mat2>),
}

impl ElementWeights {
    fn validate(&self, num_triangles: usize) -> Result<()> {
        let bad = |t: usize, reason: String| Err(Error::InvalidWeight { triangle: t, reason });
        match self {
            ElementWeights::Constant(c) => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(0, format!("constant weight {c} is not positive"));
                }
            }
            ElementWeights::Scalar(w) => {
                if w.len() != num_triangles {
                    return Err(Error::DimensionMismatch { expected: num_triangles, got: w.len() });
                }
                if let Some((t, c)) = w.iter().enumerate().find(|(_, c)| !(**c > 0.0 && c.is_finite())) {
                    return bad(t, format!("weight {c} is not positive"));
                }
            }
            ElementWeights::Matrix(w) => {
                if w.len() != num_triangles {
                    return Err(Error::DimensionMismatch { expected: num_triangles, got: w.len() });
                }
                for (t, m) in w.iter().enumerate() {
                    if m[0][1] != m[1][0] {
                        return bad(t, "matrix is not symmetric".into());
                    }
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if !(m[0][0] > 0.0 && det > 0.0 && det.is_finite()) {
                        return bad(t, "matrix is not positive definite".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&self, t: usize, g: Gradient) -> Gradient {
        match self {
            ElementWeights::Constant(c) => [c * g[0], c * g[1]],
            ElementWeights::Scalar(w) => [w[t] * g[0], w[t] * g[1]],
            ElementWeights::Matrix(w) => {
                let m = &w[t];
                [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
            }
        }
    }
}

/// `A_ij = sum_T |T| grad phi_i . W_T grad phi_j`.
pub fn assemble_weighted_stiffness(dofs: &DofMap, weights: &ElementWeights) -> Result<CsrMatrix> {
    let nt = dofs.mesh().num_triangles();
    weights.validate(nt)?;
    let mut matrix = dofs.pattern().clone();
    let values = matrix.values_mut();
    for t in 0..nt {
        let grads = dofs.basis_gradients(t);
        let area = dofs.area(t);
        let slots = &dofs.slots[t];
        for i in 0..3 {
            let wg = weights.apply(t, grads[i]);
            for j in i..3 {
                let (sij, sji) = (slots[3 * i + j], slots[3 * j + i]);
                if sij != NONE {
                    // one value for both (i, j) and (j, i) keeps the result bitwise symmetric
                    let k = area * (wg[0] * grads[j][0] + wg[1] * grads[j][1]);
                    values[sij] += k;
                    if j != i {
                        values[sji] += k;
                    }
                }
            }
        }
    }
    Ok(matrix)
}

/// Laplace stiffness matrix (weight one).
pub fn laplace_matrix(dofs: &DofMap) -> CsrMatrix {
    assemble_weighted_stiffness(dofs, &ElementWeights::Constant(1.0)).expect("unit weight is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_domain;

    fn cross_square() -> Arc<DofMap> {
        Arc::new(DofMap::new(Arc::new(make_domain("square").unwrap().uniform_refine())))
    }

    #[test]
    fn coarse_square_has_no_dofs() {
        let dofs = DofMap::new(Arc::new(make_domain("square").unwrap()));
        assert_eq!(dofs.num_dofs(), 0);
        assert_eq!(laplace_matrix(&dofs).nrows(), 0);
    }

    #[test]
    fn cross_mesh_stiffness_is_four() {
        let dofs = cross_square();
        assert_eq!(dofs.num_dofs(), 1);
        let a = laplace_matrix(&dofs);
        assert_eq!(a.to_dense(), vec![vec![4.0]]);
        let scaled = assemble_weighted_stiffness(&dofs, &ElementWeights::Constant(2.5)).unwrap();
        assert_eq!(scaled.to_dense(), vec![vec![10.0]]);
    }

    #[test]
    fn hat_function_norm() {
        let dofs = cross_square();
        let u = FeFunction::from_coeffs(&dofs, vec![1.0]).unwrap();
        assert!((energy_norm(&u) - 2.0).abs() < 1e-14);
        assert!((energy_norm(&u.scaled(-3.0)) - 6.0).abs() < 1e-14);
        assert_eq!(energy_norm(&FeFunction::zeros(&dofs)), 0.0);
    }

    #[test]
    fn basis_gradients_sum_to_zero() {
        let mesh = Arc::new(make_domain("zshape").unwrap().uniform_refine());
        let dofs = DofMap::new(mesh);
        for t in 0..dofs.mesh().num_triangles() {
            let g = dofs.basis_gradients(t);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-14);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn matrix_weights_validated() {
        let dofs = cross_square();
        let nt = dofs.mesh().num_triangles();
        let asym = ElementWeights::Matrix(vec![[[1.0, 0.5], [0.4, 1.0]]; nt]);
        assert!(matches!(assemble_weighted_stiffness(&dofs, &asym), Err(Error::InvalidWeight { .. })));
        let indef = ElementWeights::Matrix(vec![[[1.0, 2.0], [2.0, 1.0]]; nt]);
        assert!(matches!(assemble_weighted_stiffness(&dofs, &indef), Err(Error::InvalidWeight { .. })));
        let neg = ElementWeights::Scalar(vec![-1.0; nt]);
        assert!(assemble_weighted_stiffness(&dofs, &neg).is_err());
        let short = ElementWeights::Scalar(vec![1.0; nt - 1]);
        assert!(matches!(assemble_weighted_stiffness(&dofs, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_matrix_weight_matches_scalar() {
        let mesh = Arc::new(make_domain("lshape").unwrap().uniform_refine().uniform_refine());
        let dofs = DofMap::new(mesh);
        let nt = dofs.mesh().num_triangles();
        let a = assemble_weighted_stiffness(&dofs, &ElementWeights::Matrix(vec![[[1.0, 0.0], [0.0, 1.0]]; nt])).unwrap();
        let b = laplace_matrix(&dofs);
        assert_eq!(a, b);
        assert!(a.is_symmetric());
    }

    #[test]
    fn anisotropic_weights_are_symmetric() {
        let mesh = Arc::new(make_domain("zshape").unwrap().uniform_refine().uniform_refine());
        let dofs = DofMap::new(mesh);
        let nt = dofs.mesh().num_triangles();
        let w = (0..nt).map(|t| [[2.0 + t as f64 * 0.01, 0.3], [0.3, 1.0]]).collect();
        let a = assemble_weighted_stiffness(&dofs, &ElementWeights::Matrix(w)).unwrap();
        assert!(a.is_symmetric());
    }

    #[test]
    fn half_hat_has_unit_slope() {
        // the centre is at distance 1/2 from every opposite edge
        let dofs = cross_square();
        let u = FeFunction::from_coeffs(&dofs, vec![0.5]).unwrap();
        for t in 0..4 {
            let g = u.gradient(t);
            assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs() < 1e-14);
        }
    }
}
