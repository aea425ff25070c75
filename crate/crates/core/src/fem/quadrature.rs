use std::sync::LazyLock;

/// Barycentric coordinates and weight (weights sum to one, so integrals are
/// `|T| * sum w_k f(x_k)`).
pub(crate) type QuadPoint = ([f64; 3], f64);

/// Symmetric 7-point rule, exact for polynomials of degree 5.
pub(crate) static TRIANGLE_RULE: LazyLock<[QuadPoint; 7]> = LazyLock::new(|| {
    let s = 15f64.sqrt();
    let (b1, b2) = ((6.0 + s) / 21.0, (6.0 - s) / 21.0);
    let (a1, a2) = (1.0 - 2.0 * b1, 1.0 - 2.0 * b2);
    let (w1, w2) = ((155.0 + s) / 1200.0, (155.0 - s) / 1200.0);
    [
        ([1.0 / 3.0; 3], 9.0 / 40.0),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
});

/// 4-point Gauss–Legendre rule on `[0, 1]`.
pub(crate) const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_92),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_05),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_05),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_92),
];

pub(crate) fn map_point(corners: &[[f64; 2]; 3], bary: &[f64; 3]) -> [f64; 2] {
    [
        bary[0] * corners[0][0] + bary[1] * corners[1][0] + bary[2] * corners[2][0],
        bary[0] * corners[0][1] + bary[1] * corners[1][1] + bary[2] * corners[2][1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn exact_for_degree_five_monomials() {
        // reference triangle (0,0), (1,0), (0,1): int x^a y^b = a! b! / (a+b+2)!
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let quad: f64 = TRIANGLE_RULE
                    .iter()
                    .map(|(bary, w)| {
                        let [x, y] = map_point(&corners, bary);
                        w * x.powi(a as i32) * y.powi(b as i32)
                    })
                    .sum::<f64>()
                    * 0.5;
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert!((quad - exact).abs() < 1e-15, "x^{a} y^{b}: {quad} vs {exact}");
            }
        }
    }

    #[test]
    fn gauss4_exact_to_degree_seven() {
        for p in 0..=7 {
            let quad: f64 = GAUSS4.iter().map(|(x, w)| w * x.powi(p)).sum();
            assert!((quad - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
