//! Scalar nonlinearities `A(g) = mu(|g|^2) g` together with the constants that
//! the stopping criteria and diagnostics depend on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Ingredients of a user-defined nonlinearity. Nothing is estimated
/// automatically: `alpha`, `lipschitz` and the antiderivative must be supplied
/// and are validated by sampling.
#[derive(Clone)]
pub struct NonlinearityParts {
    pub name: String,
    pub mu: RealFn,
    pub mu_prime: RealFn,
    /// `M(s) = int_0^s mu(t) dt`.
    pub antiderivative: RealFn,
    /// Strong monotonicity constant.
    pub alpha: f64,
    /// Lipschitz constant `L` of the operator.
    pub lipschitz: f64,
    /// Upper constant `c` of the growth condition
    /// `alpha (t - s) <= mu(t^2) t - mu(s^2) s <= c (t - s)`; defaults to `L / 3`.
    pub growth_upper: Option<f64>,
}

#[derive(Clone)]
pub struct ScalarNonlinearity {
    name: String,
    mu: RealFn,
    mu_prime: RealFn,
    antiderivative: RealFn,
    alpha: f64,
    lipschitz: f64,
    growth_upper: f64,
}

impl fmt::Debug for ScalarNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarNonlinearity")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("lipschitz", &self.lipschitz)
            .field("growth_upper", &self.growth_upper)
            .finish()
    }
}

// The printed constants of the builtins carry ten significant digits.
const GROWTH_SLACK: f64 = 1e-8;

fn sample_points() -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut t = 1e-3;
    while t < 60.0 {
        pts.push(t);
        t *= 1.15;
    }
    pts
}

impl ScalarNonlinearity {
    pub fn new(parts: NonlinearityParts) -> Result<Self> {
        let NonlinearityParts { name, mu, mu_prime, antiderivative, alpha, lipschitz, growth_upper } = parts;
        let growth_upper = growth_upper.unwrap_or(lipschitz / 3.0);
        let bad = |msg: String| Err(Error::InvalidNonlinearity(format!("{name}: {msg}")));
        if !(alpha > 0.0 && alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {alpha}"));
        }
        if !(growth_upper >= alpha && growth_upper <= lipschitz && lipschitz.is_finite()) {
            return bad(format!("need alpha <= growth_upper <= L, got {alpha}, {growth_upper}, {lipschitz}"));
        }
        let m0 = antiderivative(0.0);
        if m0.abs() > 1e-14 {
            return bad(format!("antiderivative(0) = {m0}, expected 0"));
        }
        for s in [0.1, 0.5, 1.0, 1.5, 2.0, 5.0, 10.0, 50.0] {
            let exact = antiderivative(s);
            let quad = integrate(&*mu, 0.0, s, 1e-13);
            if (exact - quad).abs() > 1e-10 * quad.abs().max(1.0) {
                return bad(format!("antiderivative({s}) = {exact} but quadrature of mu gives {quad}"));
            }
        }
        for t in [0.0f64, 0.3, 1.0, 2.5, 7.0] {
            let h = 1e-5 * t.max(1.0);
            let fd = if t == 0.0 { (mu(h) - mu(0.0)) / h } else { (mu(t + h) - mu(t - h)) / (2.0 * h) };
            let tol = if t == 0.0 { 1e-4 } else { 1e-6 };
            if (fd - mu_prime(t)).abs() > tol * mu_prime(t).abs().max(1.0) {
                return bad(format!("mu_prime({t}) = {} disagrees with finite difference {fd}", mu_prime(t)));
            }
        }
        let this = Self { name, mu, mu_prime, antiderivative, alpha, lipschitz, growth_upper };
        let pts = sample_points();
        if let Some((t, s)) = this.growth_violation(&pts, growth_upper) {
            return Err(Error::InvalidNonlinearity(format!(
                "{}: growth condition violated for t = {t}, s = {s}",
                this.name
            )));
        }
        Ok(this)
    }

    /// `lshape`: `mu(t) = 1 + exp(-t)`, `alpha = 1 - 2 exp(-3/2)`, `L = 6`.
    /// `zshape`: `mu(t) = 1 + log(1 + t) / (1 + t)` with `alpha ~ 0.9582898017`,
    /// `L ~ 1.542343818`.
    pub fn builtin(name: &str) -> Result<Self> {
        let parts = match name {
            "lshape" => NonlinearityParts {
                name: name.into(),
                mu: Arc::new(|t| 1.0 + (-t).exp()),
                mu_prime: Arc::new(|t| -(-t).exp()),
                antiderivative: Arc::new(|s| s + 1.0 - (-s).exp()),
                alpha: 1.0 - 2.0 * (-1.5f64).exp(),
                lipschitz: 6.0,
                growth_upper: None,
            },
            "zshape" => NonlinearityParts {
                name: name.into(),
                mu: Arc::new(|t| 1.0 + t.ln_1p() / (1.0 + t)),
                mu_prime: Arc::new(|t| (1.0 - t.ln_1p()) / (1.0 + t).powi(2)),
                antiderivative: Arc::new(|s| s + 0.5 * s.ln_1p().powi(2)),
                alpha: 0.9582898017,
                lipschitz: 1.542343818,
                // these constants are the sharp bounds of d/dt[mu(t^2) t], so
                // the growth condition holds with L itself as upper constant
                growth_upper: Some(1.542343818),
            },
            other => return Err(Error::UnknownProblem(other.to_string())),
        };
        Self::new(parts)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mu(&self, t: f64) -> f64 {
        (self.mu)(t)
    }

    pub fn mu_prime(&self, t: f64) -> f64 {
        (self.mu_prime)(t)
    }

    pub fn antiderivative(&self, s: f64) -> f64 {
        (self.antiderivative)(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Upper growth constant; also the ceiling of `mu` and hence of every
    /// frozen-coefficient weight.
    pub fn growth_upper(&self) -> f64 {
        self.growth_upper
    }

    /// `mu(|g|^2) g`.
    pub fn flux(&self, g: [f64; 2]) -> [f64; 2] {
        let m = self.mu(g[0] * g[0] + g[1] * g[1]);
        [m * g[0], m * g[1]]
    }

    /// `2 mu'(|g|^2) g g^T + mu(|g|^2) I`.
    pub fn flux_jacobian(&self, g: [f64; 2]) -> [[f64; 2]; 2] {
        let t = g[0] * g[0] + g[1] * g[1];
        let (m, dm) = (self.mu(t), 2.0 * self.mu_prime(t));
        let off = dm * g[0] * g[1];
        [[m + dm * g[0] * g[0], off], [off, m + dm * g[1] * g[1]]]
    }

    /// `M(|g|^2) / 2`.
    pub fn energy_density(&self, g: [f64; 2]) -> f64 {
        0.5 * self.antiderivative(g[0] * g[0] + g[1] * g[1])
    }

    /// First sampled pair `t > s >= 0` where the growth condition with upper
    /// constant `upper` fails, if any.
    pub fn growth_violation(&self, samples: &[f64], upper: f64) -> Option<(f64, f64)> {
        let phi: Vec<f64> = samples.iter().map(|&t| self.mu(t * t) * t).collect();
        for (i, &t) in samples.iter().enumerate() {
            for (j, &s) in samples.iter().enumerate().take(i) {
                debug_assert!(t > s);
                let diff = phi[i] - phi[j];
                let dt = t - s;
                let slack = GROWTH_SLACK * dt * upper;
                if diff < self.alpha * dt - slack || diff > upper * dt + slack {
                    return Some((t, s));
                }
            }
        }
        None
    }

    /// Sampled bounds on the spectrum of [`Self::flux_jacobian`]: the
    /// eigenvalues are `mu(t)` and `mu(t) + 2 t mu'(t)` with `t = |g|^2`.
    pub fn jacobian_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut t = 0.0;
        let mut step = 1e-6;
        while t <= 1e4 {
            let (m, dm) = (self.mu(t), self.mu_prime(t));
            for ev in [m, m + 2.0 * t * dm] {
                lo = lo.min(ev);
                hi = hi.max(ev);
            }
            t += step;
            step = step.max(1e-3 * t);
        }
        (lo, hi)
    }
}

// 7-point Gauss / 15-point Kronrod pair on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gauss_kronrod(f, a, b);
        if err <= tol.max(1e-15 * val.abs()) || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    recurse(f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn flux_examples() {
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        let z = ScalarNonlinearity::builtin("zshape").unwrap();
        assert_eq!(l.flux([0.0, 0.0]), [0.0, 0.0]);
        let f = l.flux([1.0, 0.0]);
        assert!(close(f[0], 1.0 + (-1f64).exp(), 1e-15) && f[1] == 0.0);
        assert!((f[0] - 1.367879).abs() < 1e-6);
        let f = z.flux([0.0, 1.0]);
        assert!(f[0] == 0.0 && close(f[1], 1.0 + 2f64.ln() / 2.0, 1e-15));
        assert!((f[1] - 1.346574).abs() < 1e-6);
    }

    #[test]
    fn jacobian_examples() {
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        assert_eq!(l.flux_jacobian([0.0, 0.0]), [[2.0, 0.0], [0.0, 2.0]]);
        let j = l.flux_jacobian([1.0, 0.0]);
        let e = (-1f64).exp();
        assert!(close(j[0][0], 1.0 - e, 1e-15) && close(j[1][1], 1.0 + e, 1e-15));
        assert_eq!(j[0][1], 0.0);
    }

    #[test]
    fn energy_density_examples() {
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        let z = ScalarNonlinearity::builtin("zshape").unwrap();
        assert_eq!(l.energy_density([0.0, 0.0]), 0.0);
        assert!((l.energy_density([1.0, 0.0]) - 0.816060).abs() < 1e-6);
        assert!((z.energy_density([2.0, 0.0]) - 2.6475726).abs() < 1e-6);
        // independent check of the closed forms by quadrature of mu
        for (n, g) in [(&l, [1.0, 0.0]), (&z, [2.0, 0.0])] {
            let s = g[0] * g[0];
            let quad = integrate(&|t| n.mu(t), 0.0, s, 1e-14);
            assert!(close(n.energy_density(g), 0.5 * quad, 1e-12));
        }
    }

    #[test]
    fn builtin_constants() {
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        assert!((l.alpha() - 0.5537397).abs() < 1e-6);
        assert_eq!(l.lipschitz(), 6.0);
        assert!(close(1.0 / l.lipschitz(), 1.0 / 6.0, 1e-15));
        assert!(l.alpha() <= l.lipschitz() / 3.0);
        let z = ScalarNonlinearity::builtin("zshape").unwrap();
        assert_eq!(z.alpha(), 0.9582898017);
        assert_eq!(z.lipschitz(), 1.542343818);
        // the printed Z-shape pair does not satisfy alpha <= L/3
        assert!(z.alpha() > z.lipschitz() / 3.0);
        assert!(matches!(ScalarNonlinearity::builtin("p-laplace"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn growth_condition_on_dense_grid() {
        // 100 x 100 grid of (t, s) values: 10^4 ordered pairs
        let grid: Vec<f64> = (0..100).map(|i| 0.05 * i as f64 + 0.002 * (i * i) as f64).collect();
        for name in ["lshape", "zshape"] {
            let n = ScalarNonlinearity::builtin(name).unwrap();
            assert_eq!(n.growth_violation(&grid, n.growth_upper()), None, "{name}");
        }
        // the L-shape satisfies the normalized form with L / 3 directly
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        assert_eq!(l.growth_violation(&grid, l.lipschitz() / 3.0), None);
    }

    #[test]
    fn frozen_coefficient_bounds() {
        for name in ["lshape", "zshape"] {
            let n = ScalarNonlinearity::builtin(name).unwrap();
            for i in 0..5000 {
                let s = 0.01 * i as f64;
                let m = n.mu(s);
                assert!(m >= n.alpha() && m <= n.growth_upper(), "{name}: mu({s}) = {m}");
            }
        }
    }

    #[test]
    fn jacobian_bounds_match_constants() {
        let l = ScalarNonlinearity::builtin("lshape").unwrap();
        let (lo, hi) = l.jacobian_bounds();
        assert!((lo - l.alpha()).abs() < 1e-6 && (hi - 2.0).abs() < 1e-12);
        let z = ScalarNonlinearity::builtin("zshape").unwrap();
        let (lo, hi) = z.jacobian_bounds();
        assert!((lo - z.alpha()).abs() < 1e-6 && (hi - z.lipschitz()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_antiderivative() {
        let parts = NonlinearityParts {
            name: "bad".into(),
            mu: Arc::new(|_| 1.0),
            mu_prime: Arc::new(|_| 0.0),
            antiderivative: Arc::new(|s| 2.0 * s),
            alpha: 1.0,
            lipschitz: 3.0,
            growth_upper: None,
        };
        assert!(matches!(ScalarNonlinearity::new(parts), Err(Error::InvalidNonlinearity(_))));
    }

    #[test]
    fn rejects_growth_violation() {
        // alpha claimed larger than the true monotonicity constant
        let parts = NonlinearityParts {
            name: "overclaimed".into(),
            mu: Arc::new(|t| 1.0 + (-t).exp()),
            mu_prime: Arc::new(|t| -(-t).exp()),
            antiderivative: Arc::new(|s| s + 1.0 - (-s).exp()),
            alpha: 0.9,
            lipschitz: 6.0,
            growth_upper: None,
        };
        assert!(matches!(ScalarNonlinearity::new(parts), Err(Error::InvalidNonlinearity(_))));
    }

    #[test]
    fn quadrature_of_polynomial_and_exponential() {
        assert!(close(integrate(&|t| t * t, 0.0, 3.0, 1e-14), 9.0, 1e-14));
        assert!(close(integrate(&|t| (-t).exp(), 0.0, 20.0, 1e-14), 1.0 - (-20f64).exp(), 1e-13));
    }
}
