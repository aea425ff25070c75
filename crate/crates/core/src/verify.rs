//! Randomized invariant checks shared by the test suites and `afem verify`.
//!
//! Every check takes its own seeded generator, so results are reproducible.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{doerfler_mark, reference_solution};
use crate::algsolver::{measure_contraction, estimate_contraction, MultilevelHierarchy};
use crate::error::{Error, Result};
use crate::estimator::{indicators, IndicatorField};
use crate::fem::{energy_norm_of_difference, DiscreteProblem, DofMap, FeFunction, ProblemData};
use crate::linearize::{build_system, LinearizationMethod};
use crate::mesh::{make_domain, Ancestry, MarkedSet, Mesh};
use crate::nonlinearity::{NonlinearityParts, ScalarNonlinearity};
use crate::problems::builtin_problem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// P1 function with nodal values uniform in `[-scale, scale]`.
pub fn random_function(dofs: &Arc<DofMap>, scale: f64, rng: &mut impl Rng) -> FeFunction {
    let coeffs = (0..dofs.num_dofs()).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
    FeFunction::from_coeffs(dofs, coeffs).expect("length matches")
}

/// Refines the given fraction of triangles, chosen at random.
pub fn random_refine(mesh: &Mesh, fraction: f64, rng: &mut impl Rng) -> Mesh {
    let n = mesh.num_triangles();
    let mut picked: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < fraction).collect();
    if picked.is_empty() {
        picked.push(rng.random_range(0..n));
    }
    mesh.refine(&MarkedSet::new(picked, n).expect("indices in range"))
}

/// The L- and Z-shaped benchmark problems on meshes refined `levels` times uniformly.
pub fn benchmark_problems(levels: usize) -> Result<Vec<DiscreteProblem>> {
    ["lshape", "zshape"]
        .iter()
        .map(|name| {
            let p = builtin_problem(name)?;
            let mut mesh = p.initial_mesh.clone();
            for _ in 0..levels {
                mesh = mesh.uniform_refine();
            }
            Ok(DiscreteProblem::new(Arc::new(DofMap::new(Arc::new(mesh))), &p.data, &p.nonlinearity))
        })
        .collect()
}

/// Largest relative defect of antisymmetry and three-point additivity of
/// the energy difference over random triples.
pub fn energy_difference_algebra(problem: &DiscreteProblem, triples: usize, rng: &mut impl Rng) -> Result<f64> {
    let dofs = problem.dofs();
    let mut worst: f64 = 0.0;
    for i in 0..triples {
        // mix large and tiny separations so both evaluation branches are hit
        let scale = if i % 2 == 0 { 1.0 } else { 1e-4 };
        let u = random_function(dofs, 1.0, rng);
        let v = u.sub(&random_function(dofs, scale, rng))?;
        let w = v.sub(&random_function(dofs, scale, rng))?;
        let (uv, vw, uw) =
            (problem.energy_difference(&u, &v)?, problem.energy_difference(&v, &w)?, problem.energy_difference(&u, &w)?);
        let vu = problem.energy_difference(&v, &u)?;
        let size = uv.abs().max(vw.abs()).max(uw.abs());
        if size == 0.0 {
            continue;
        }
        worst = worst.max((uv + vu).abs() / size).max((uv + vw - uw).abs() / size);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReductionStats {
    pub checks: usize,
    pub violations: usize,
    /// Largest `eta_h(refined part) / eta_H(refined part)`.
    pub max_ratio: f64,
}

/// Reduction on refined elements: for random coarse `v`,
/// `eta_h(T_h \ T_H, v) <= 2^{-1/4} eta_H(T_H \ T_h, v)` up to relative slack `1e-12`.
/// `estimator` is a parameter so corrupted estimators can be fed in.
pub fn reduction<E>(
    coarse: &Mesh,
    fine: &Mesh,
    data: &ProblemData,
    nonlinearity: &ScalarNonlinearity,
    samples: usize,
    rng: &mut impl Rng,
    estimator: E,
) -> Result<ReductionStats>
where
    E: Fn(&DiscreteProblem, &FeFunction) -> Result<IndicatorField>,
{
    let coarse_dofs = Arc::new(DofMap::new(Arc::new(coarse.clone())));
    let fine_dofs = Arc::new(DofMap::new(Arc::new(fine.clone())));
    let mut hierarchy = MultilevelHierarchy::new(Arc::clone(&coarse_dofs));
    hierarchy.push(Arc::clone(&fine_dofs))?;
    let coarse_problem = DiscreteProblem::new(Arc::clone(&coarse_dofs), data, nonlinearity);
    let fine_problem = DiscreteProblem::new(Arc::clone(&fine_dofs), data, nonlinearity);

    let mut kept = vec![false; coarse.num_triangles()];
    for a in fine.ancestry() {
        if let Ancestry::Kept(p) = a {
            kept[*p] = true;
        }
    }
    let refined_coarse: Vec<usize> = (0..coarse.num_triangles()).filter(|&t| !kept[t]).collect();
    let new_fine: Vec<usize> = (0..fine.num_triangles()).filter(|&t| fine.ancestry()[t].is_new()).collect();
    let coarse_set = MarkedSet::new(refined_coarse, coarse.num_triangles())?;
    let fine_set = MarkedSet::new(new_fine, fine.num_triangles())?;

    let q = 2f64.powf(-0.25);
    let mut stats = ReductionStats::default();
    for _ in 0..samples {
        let v = random_function(&coarse_dofs, 1.0, rng);
        let v_fine = FeFunction::from_coeffs(&fine_dofs, hierarchy.prolongate(1, v.coeffs()))?;
        let eta_h = estimator(&fine_problem, &v_fine)?.restricted(&fine_set)?;
        let eta_big = estimator(&coarse_problem, &v)?.restricted(&coarse_set)?;
        stats.checks += 1;
        if eta_h > q * eta_big * (1.0 + 1e-12) {
            stats.violations += 1;
        }
        if eta_big > 0.0 {
            stats.max_ratio = stats.max_ratio.max(eta_h / eta_big);
        }
    }
    Ok(stats)
}

/// Coarse/fine mesh pairs for the reduction check: each benchmark domain
/// refined uniformly, then a random subset bisected.
pub fn reduction_meshes(rng: &mut impl Rng) -> Result<Vec<(Mesh, Mesh)>> {
    ["square", "lshape", "zshape"]
        .iter()
        .map(|name| {
            let coarse = make_domain(name)?.uniform_refine().uniform_refine();
            let fine = random_refine(&coarse, 0.3, rng);
            Ok((coarse, fine))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichStats {
    pub samples: usize,
    /// Smallest and largest `dl2(u*, v) / ||v - u*||^2`.
    pub min_quotient: f64,
    pub max_quotient: f64,
}

/// Energy quotients `dl2(u*, v) / ||v - u*||^2` at random `v` around the
/// discrete minimizer `reference`; they lie in `[alpha/2, L/2]`.
pub fn norm_energy_sandwich(
    problem: &DiscreteProblem,
    reference: &FeFunction,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<SandwichStats> {
    let mut stats = SandwichStats { samples, min_quotient: f64::INFINITY, max_quotient: f64::NEG_INFINITY };
    for i in 0..samples {
        let scale = 10f64.powi(-((i % 4) as i32));
        let v = reference.sub(&random_function(problem.dofs(), scale, rng))?;
        let d = energy_norm_of_difference(&v, reference)?;
        let quotient = problem.energy_difference(reference, &v)? / (d * d);
        stats.min_quotient = stats.min_quotient.min(quotient);
        stats.max_quotient = stats.max_quotient.max(quotient);
    }
    Ok(stats)
}

/// Checks the sandwich bounds with relative slack `1e-12`.
pub fn sandwich_holds(stats: &SandwichStats, n: &ScalarNonlinearity) -> bool {
    stats.min_quotient >= 0.5 * n.alpha() * (1.0 - 1e-12) && stats.max_quotient <= 0.5 * n.lipschitz() * (1.0 + 1e-12)
}

/// Smallest Dörfler set by exhaustive search; `None` if the total vanishes.
pub fn brute_force_doerfler(values: &[f64], theta: f64) -> Option<usize> {
    assert!(values.len() <= 20, "exhaustive search limited to 20 entries");
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return None;
    }
    let mut best = values.len();
    for mask in 0u32..(1 << values.len()) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let sum: f64 = (0..values.len()).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).sum();
        if sum >= theta * total {
            best = size;
        }
    }
    Some(best)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinimalityStats {
    pub fields: usize,
    pub mismatches: usize,
}

/// Compares [`doerfler_mark`] against exhaustive search on random indicator
/// fields over meshes with at most 15 triangles.
pub fn doerfler_minimality(fields: usize, rng: &mut impl Rng) -> Result<MinimalityStats> {
    let mut meshes = Vec::new();
    for name in ["square", "lshape", "zshape"] {
        let mut m = make_domain(name)?;
        while m.num_triangles() <= 15 {
            meshes.push(m.clone());
            m = random_refine(&m, 0.3, rng);
        }
    }
    let mut stats = MinimalityStats::default();
    for i in 0..fields {
        let mesh = &meshes[i % meshes.len()];
        let n = mesh.num_triangles();
        let values: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>().powi(3),
            })
            .collect();
        let theta = if i % 10 == 0 { 1.0 } else { rng.random_range(0.01..1.0) };
        let field = IndicatorField::new(values.clone())?;
        let marked = doerfler_mark(&field, theta);
        let total: f64 = values.iter().sum();
        let captured: f64 = marked.indices().iter().map(|&t| values[t]).sum();
        let ok = match brute_force_doerfler(&values, theta) {
            None => marked.is_empty(),
            Some(min) => marked.len() == min && captured >= theta * total,
        };
        stats.fields += 1;
        if !ok {
            stats.mismatches += 1;
        }
    }
    Ok(stats)
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

/// All property checks at small scale.
pub fn run_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    out.push(outcome("mesh conformity under random refinement", (|| {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for name in ["square", "lshape", "zshape"] {
            let mut m = make_domain(name)?;
            let area = m.total_area();
            for _ in 0..8 {
                m = random_refine(&m, 0.2, &mut r);
                m.check_conformity()?;
                worst = worst.max((m.total_area() - area).abs());
            }
        }
        Ok((worst < 1e-12, format!("area drift {worst:.1e}")))
    })()));

    out.push(outcome("builtin nonlinearities validate", (|| {
        for name in ["lshape", "zshape"] {
            ScalarNonlinearity::builtin(name)?;
        }
        let wrong = ScalarNonlinearity::new(NonlinearityParts {
            name: "wrong antiderivative".into(),
            mu: Arc::new(|t: f64| 1.0 + (-t).exp()),
            mu_prime: Arc::new(|t: f64| -(-t).exp()),
            antiderivative: Arc::new(|s| s),
            alpha: 1.0 - 2.0 * (-1.5f64).exp(),
            lipschitz: 6.0,
            growth_upper: None,
        });
        Ok((wrong.is_err(), "inconsistent antiderivative rejected".into()))
    })()));

    out.push(outcome("energy difference algebra", (|| {
        let mut r = rng(seed + 1);
        let mut worst: f64 = 0.0;
        for p in benchmark_problems(2)? {
            worst = worst.max(energy_difference_algebra(&p, 100, &mut r)?);
        }
        Ok((worst <= 1e-12, format!("max relative defect {worst:.2e}")))
    })()));

    out.push(outcome("estimator reduction on refined elements", (|| {
        let mut r = rng(seed + 2);
        let n = ScalarNonlinearity::builtin("lshape")?;
        let data = ProblemData::constant(1.0, [0.3, -0.2]);
        let (mut violations, mut checks) = (0, 0);
        for (coarse, fine) in reduction_meshes(&mut r)? {
            let s = reduction(&coarse, &fine, &data, &n, 10, &mut r, indicators)?;
            violations += s.violations;
            checks += s.checks;
        }
        Ok((violations == 0, format!("{violations} violations in {checks} checks")))
    })()));

    out.push(outcome("norm-energy sandwich", (|| {
        let mut r = rng(seed + 3);
        let p = &benchmark_problems(2)?[0];
        let reference = reference_solution(p, &p.zero())?;
        let s = norm_energy_sandwich(p, &reference, 20, &mut r)?;
        let holds = sandwich_holds(&s, p.nonlinearity());
        Ok((holds, format!("quotients in [{:.4}, {:.4}]", s.min_quotient, s.max_quotient)))
    })()));

    out.push(outcome("Dörfler marking minimality", (|| {
        let mut r = rng(seed + 4);
        let s = doerfler_minimality(50, &mut r)?;
        Ok((s.mismatches == 0, format!("{} mismatches in {} fields", s.mismatches, s.fields)))
    })()));

    out.push(outcome("multigrid contraction", (|| {
        let p = &benchmark_problems(0)?[0];
        let mut r = rng(seed + 5);
        let mut mesh = p.dofs().mesh().as_ref().clone();
        let dofs0 = Arc::new(DofMap::new(Arc::new(mesh.clone())));
        let mut hierarchy = MultilevelHierarchy::new(dofs0);
        for _ in 0..6 {
            mesh = random_refine(&mesh, 0.4, &mut r);
            hierarchy.push(Arc::new(DofMap::new(Arc::new(mesh.clone()))))?;
        }
        let problem = DiscreteProblem::new(Arc::clone(hierarchy.finest()), p.data(), p.nonlinearity());
        let u = random_function(problem.dofs(), 0.5, &mut r);
        let sys = build_system(LinearizationMethod::Kacanov, &problem, &u)?;
        let stats = measure_contraction(&hierarchy, &sys, &problem.zero(), 8)?;
        let q = estimate_contraction(&stats)?;
        Ok((q < 1.0, format!("max ratio {q:.3}")))
    })()));

    out
}

/// Error unless every check passed.
pub fn require_all(outcomes: &[CheckOutcome]) -> Result<()> {
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Defect(format!("failed checks: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::indicators_with_jump;

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_doerfler(&[4.0, 1.0, 1.0, 1.0, 1.0], 0.5), Some(1));
        assert_eq!(brute_force_doerfler(&[1.0; 10], 0.3), Some(3));
        assert_eq!(brute_force_doerfler(&[0.0, 2.0, 0.0, 1.0], 1.0), Some(2));
        assert_eq!(brute_force_doerfler(&[0.0; 3], 0.5), None);
    }

    #[test]
    fn suite_passes() {
        let outcomes = run_suite(7);
        for o in &outcomes {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
        require_all(&outcomes).unwrap();
    }

    #[test]
    fn flipped_jump_sign_breaks_reduction() {
        let mut r = rng(11);
        let n = ScalarNonlinearity::builtin("lshape").unwrap();
        let data = ProblemData::constant(1.0, [0.3, -0.2]);
        let flipped = |p: &DiscreteProblem, u: &FeFunction| indicators_with_jump(p, u, |a, b| [a[0] + b[0], a[1] + b[1]]);
        let mut violations = 0;
        for (coarse, fine) in reduction_meshes(&mut r).unwrap() {
            violations += reduction(&coarse, &fine, &data, &n, 10, &mut r, flipped).unwrap().violations;
        }
        assert!(violations > 0);
    }

    #[test]
    fn failed_check_reported() {
        let outcomes = vec![
            CheckOutcome { name: "a", passed: true, detail: String::new() },
            CheckOutcome { name: "b", passed: false, detail: String::new() },
        ];
        assert!(matches!(require_all(&outcomes), Err(Error::Defect(m)) if m.contains('b')));
    }
}
