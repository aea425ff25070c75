//! Algebraic solvers for the linearized systems.
//!
//! [`one_step`] performs one V-cycle of a local multigrid method on the
//! refinement hierarchy `T_0, ..., T_L`. On level `l` Gauss–Seidel sweeps only
//! touch the dofs created by the refinement `T_{l-1} -> T_l` and their
//! neighbours; level 0 is solved exactly. Coarse operators are Galerkin
//! products `P^T A P`, so every level sees the exact restriction of the
//! fine form. With a forward sweep before and a backward sweep after the
//! coarse correction, the error propagation is self-adjoint in the energy
//! inner product of the system.
//!
//! [`direct_solve`] is a sparse Cholesky factorization used as reference.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::fem::{DofMap, FeFunction};
use crate::linearize::LinearizedSystem;
use crate::mesh::NONE;
use crate::sparse::CsrMatrix;

/// Sparse Cholesky factorization of an SPD [`CsrMatrix`].
pub struct SparseCholesky {
    n: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Ok(Self { n, llt: None });
        }
        let mut triplets = Vec::with_capacity(a.nnz() / 2 + n);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    triplets.push(Triplet::new(i, j, v));
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let llt = mat.sp_cholesky(Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { n, llt: Some(llt) })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let Some(llt) = &self.llt else { return Vec::new() };
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        llt.solve_in_place(&mut x);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

pub fn direct_solve(sys: &LinearizedSystem) -> Result<FeFunction> {
    let x = SparseCholesky::new(sys.matrix())?.solve(sys.rhs());
    FeFunction::from_coeffs(sys.point().dofs(), x)
}

struct Level {
    dofs: Arc<DofMap>,
    // parent dofs (NONE for boundary parents) of each dof created on this
    // level, indexed by `dof - coarse_dofs`
    parents: Vec<[usize; 2]>,
    coarse_dofs: usize,
    smoothing: Vec<usize>,
}

/// Nested P1 spaces of a refinement chain.
pub struct MultilevelHierarchy {
    levels: Vec<Level>,
}

impl MultilevelHierarchy {
    pub fn new(initial: Arc<DofMap>) -> Self {
        Self { levels: vec![Level { dofs: initial, parents: Vec::new(), coarse_dofs: 0, smoothing: Vec::new() }] }
    }

    /// Appends the next level. Its mesh must be a refinement of the current
    /// finest mesh.
    pub fn push(&mut self, fine: Arc<DofMap>) -> Result<()> {
        let coarse = self.finest();
        let (cm, fm) = (coarse.mesh(), fine.mesh());
        if fm.generation() != cm.generation() + 1 || fm.previous_vertex_count() != cm.num_vertices() {
            return Err(Error::InvalidMesh("hierarchy level is not a refinement of the previous one".into()));
        }
        let nc = coarse.num_dofs();
        if fine.num_dofs() < nc || (nc > 0 && fine.vertex_of_dof(nc - 1) != coarse.vertex_of_dof(nc - 1)) {
            return Err(Error::InvalidMesh("coarse dofs are not a prefix of the fine dofs".into()));
        }
        let parents: Vec<[usize; 2]> = (nc..fine.num_dofs())
            .map(|d| {
                let v = fine.vertex_of_dof(d);
                let [a, b] = fm.vertex_parents()[v].expect("new vertex has parents");
                [a, b].map(|p| coarse.dof_of_vertex(p).unwrap_or(NONE))
            })
            .collect();
        let mut in_set = vec![false; fine.num_dofs()];
        let neighbors = fm.vertex_neighbors();
        for (v, nb) in neighbors.iter().enumerate().skip(cm.num_vertices()) {
            for &w in std::iter::once(&v).chain(nb) {
                if let Some(d) = fine.dof_of_vertex(w) {
                    in_set[d] = true;
                }
            }
        }
        let smoothing = (0..fine.num_dofs()).filter(|&d| in_set[d]).collect();
        self.levels.push(Level { dofs: fine, parents, coarse_dofs: nc, smoothing });
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &Arc<DofMap> {
        &self.levels.last().expect("nonempty").dofs
    }

    pub fn level_dofs(&self, l: usize) -> &Arc<DofMap> {
        &self.levels[l].dofs
    }

    /// Dofs smoothed on level `l` (empty on level 0, which is solved exactly).
    pub fn smoothing_set(&self, l: usize) -> &[usize] {
        &self.levels[l].smoothing
    }

    /// Coefficients on level `l` of a level `l - 1` function.
    pub fn prolongate(&self, l: usize, coarse: &[f64]) -> Vec<f64> {
        let level = &self.levels[l];
        let mut fine = Vec::with_capacity(level.dofs.num_dofs());
        fine.extend_from_slice(&coarse[..level.coarse_dofs]);
        for p in &level.parents {
            fine.push(0.5 * p.iter().filter(|&&d| d != NONE).map(|&d| coarse[d]).sum::<f64>());
        }
        fine
    }

    /// Transpose of [`Self::prolongate`].
    pub fn restrict(&self, l: usize, fine: &[f64]) -> Vec<f64> {
        let level = &self.levels[l];
        let mut coarse = fine[..level.coarse_dofs].to_vec();
        for (k, p) in level.parents.iter().enumerate() {
            let v = 0.5 * fine[level.coarse_dofs + k];
            for &d in p.iter().filter(|&&d| d != NONE) {
                coarse[d] += v;
            }
        }
        coarse
    }

    fn galerkin(&self, l: usize, fine: &CsrMatrix) -> CsrMatrix {
        let level = &self.levels[l];
        let nc = level.coarse_dofs;
        let mut coarse = self.levels[l - 1].dofs.pattern().clone();
        let weights = |i: usize| -> [(usize, f64); 2] {
            if i < nc {
                [(i, 1.0), (NONE, 0.0)]
            } else {
                level.parents[i - nc].map(|d| (d, 0.5))
            }
        };
        let values_pos = |c: &CsrMatrix, i: usize, j: usize| c.position(i, j).expect("Galerkin entry in coarse pattern");
        for i in 0..fine.nrows() {
            let wi = weights(i);
            let (cols, vals) = fine.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    break;
                }
                let wj = weights(j);
                for &(ci, a) in wi.iter().filter(|(d, _)| *d != NONE) {
                    for &(cj, b) in wj.iter().filter(|(d, _)| *d != NONE) {
                        let x = a * b * v;
                        if j == i {
                            let p = values_pos(&coarse, ci, cj);
                            coarse.values_mut()[p] += x;
                        } else {
                            let p = values_pos(&coarse, ci, cj);
                            coarse.values_mut()[p] += x;
                            let q = values_pos(&coarse, cj, ci);
                            coarse.values_mut()[q] += x;
                        }
                    }
                }
            }
        }
        coarse
    }
}

/// Operators of all levels for one system matrix, reusable across steps.
pub struct MultigridCycle<'h> {
    hierarchy: &'h MultilevelHierarchy,
    matrices: Vec<CsrMatrix>,
    coarse_solver: SparseCholesky,
}

impl<'h> MultigridCycle<'h> {
    pub fn new(hierarchy: &'h MultilevelHierarchy, matrix: &CsrMatrix) -> Result<Self> {
        let nl = hierarchy.num_levels();
        if matrix.nrows() != hierarchy.finest().num_dofs() {
            return Err(Error::DimensionMismatch { expected: hierarchy.finest().num_dofs(), got: matrix.nrows() });
        }
        let mut matrices = vec![matrix.clone()];
        for l in (1..nl).rev() {
            let coarse = hierarchy.galerkin(l, matrices.last().expect("nonempty"));
            matrices.push(coarse);
        }
        matrices.reverse();
        let coarse_solver = SparseCholesky::new(&matrices[0])?;
        Ok(Self { hierarchy, matrices, coarse_solver })
    }

    /// Galerkin operator on level `l`.
    pub fn matrix(&self, l: usize) -> &CsrMatrix {
        &self.matrices[l]
    }

    /// One V-cycle for `A x = rhs` starting from `x`.
    pub fn step(&self, rhs: &[f64], x: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        self.cycle(self.matrices.len() - 1, rhs, &mut x);
        x
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        if l == 0 {
            x.copy_from_slice(&self.coarse_solver.solve(b));
            return;
        }
        let a = &self.matrices[l];
        let set = self.hierarchy.smoothing_set(l);
        for &i in set {
            gauss_seidel_update(a, b, x, i);
        }
        let mut r = a.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rc = self.hierarchy.restrict(l, &r);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(l - 1, &rc, &mut ec);
        for (xi, ei) in x.iter_mut().zip(self.hierarchy.prolongate(l, &ec)) {
            *xi += ei;
        }
        for &i in set.iter().rev() {
            gauss_seidel_update(a, b, x, i);
        }
    }
}

fn gauss_seidel_update(a: &CsrMatrix, b: &[f64], x: &mut [f64], i: usize) {
    let (cols, vals) = a.row(i);
    let mut diag = 0.0;
    let mut sum = b[i];
    for (&j, &v) in cols.iter().zip(vals) {
        if j == i {
            diag = v;
        } else {
            sum -= v * x[j];
        }
    }
    x[i] = sum / diag;
}

/// One multigrid step for `sys` from `iterate`.
pub fn one_step(hierarchy: &MultilevelHierarchy, sys: &LinearizedSystem, iterate: &FeFunction) -> Result<FeFunction> {
    if !Arc::ptr_eq(iterate.dofs(), sys.point().dofs()) || !Arc::ptr_eq(iterate.dofs(), hierarchy.finest()) {
        return Err(Error::DimensionMismatch { expected: sys.rhs().len(), got: iterate.coeffs().len() });
    }
    let cycle = MultigridCycle::new(hierarchy, sys.matrix())?;
    FeFunction::from_coeffs(iterate.dofs(), cycle.step(sys.rhs(), iterate.coeffs()))
}

/// Energy-norm errors and contraction ratios of consecutive solver steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub steps: usize,
}

impl SolverStats {
    /// Records one step. The ratio is kept only if the previous error is
    /// above `floor`, below which it is rounding noise.
    pub fn record(&mut self, previous_error: f64, error: f64, floor: f64) {
        self.steps += 1;
        self.errors.push(error);
        if previous_error > floor {
            self.ratios.push(error / previous_error);
        }
    }

    pub fn merge(&mut self, other: &SolverStats) {
        self.errors.extend_from_slice(&other.errors);
        self.ratios.extend_from_slice(&other.ratios);
        self.steps += other.steps;
    }
}

/// Largest recorded contraction ratio.
pub fn estimate_contraction(stats: &SolverStats) -> Result<f64> {
    stats.ratios.iter().copied().reduce(f64::max).ok_or(Error::EmptyStats)
}

/// Runs `steps` V-cycles from `start` and measures the energy-norm error
/// against a direct solve.
pub fn measure_contraction(
    hierarchy: &MultilevelHierarchy,
    sys: &LinearizedSystem,
    start: &FeFunction,
    steps: usize,
) -> Result<SolverStats> {
    let exact = direct_solve(sys)?;
    let cycle = MultigridCycle::new(hierarchy, sys.matrix())?;
    let err = |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(exact.coeffs()).map(|(a, b)| a - b).collect();
        sys.a_norm(&d)
    };
    let floor = 1e-12 * sys.a_norm(exact.coeffs());
    let mut x = start.coeffs().to_vec();
    let mut stats = SolverStats::default();
    let mut prev = err(&x);
    for _ in 0..steps {
        x = cycle.step(sys.rhs(), &x);
        let e = err(&x);
        stats.record(prev, e, floor);
        prev = e;
    }
    Ok(stats)
}
