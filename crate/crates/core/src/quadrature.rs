//! Quadrature rules: simplex rules, Gauss–Legendre, ball averages, and an
//! adaptive Gauss–Kronrod integrator for one-dimensional integrals.

/// Simplex rule in barycentric coordinates; weights sum to one (multiply by
/// the simplex volume).
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

fn orbit_a(a: f64, dim: usize) -> Vec<[f64; 4]> {
    let b = 1.0 - dim as f64 * a;
    (0..=dim)
        .map(|k| {
            let mut p = [0.0; 4];
            for (i, v) in p.iter_mut().enumerate().take(dim + 1) {
                *v = if i == k { b } else { a };
            }
            p
        })
        .collect()
}

/// Degree-4 rule on triangles (6 points, positive weights).
pub fn triangle_degree4() -> SimplexRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (a, w) in [
        (0.445_948_490_915_965, 0.223_381_589_678_011),
        (0.091_576_213_509_771, 0.109_951_743_655_322),
    ] {
        for p in orbit_a(a, 2) {
            points.push(p);
            weights.push(w);
        }
    }
    SimplexRule { points, weights }
}

/// 14-point rule on tetrahedra, exact to degree 5 (positive weights).
pub fn tetrahedron_degree5() -> SimplexRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (a, w) in [
        (0.092_735_250_310_891_2, 0.073_493_043_116_361_9),
        (0.310_885_919_263_300_6, 0.112_687_925_718_015_9),
    ] {
        for p in orbit_a(a, 3) {
            points.push(p);
            weights.push(w);
        }
    }
    let a = 0.045_503_704_125_649_6;
    let b = 0.5 - a;
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut p = [a; 4];
        p[i] = b;
        p[j] = b;
        points.push(p);
        weights.push(0.042_546_020_777_081_2);
    }
    SimplexRule { points, weights }
}

/// The fixed volume rule used throughout: degree 4 (or better) on simplices.
pub fn simplex_rule(dim: usize) -> SimplexRule {
    if dim == 2 {
        triangle_degree4()
    } else {
        tetrahedron_degree5()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (a + h * (xi + 1.0), h * wi))
        .collect()
}

/// Averaging rule on the unit ball: offsets and weights summing to one.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub offsets: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl BallRule {
    /// Product rule: Gauss in the radius (with the Jacobian), trapezoid in
    /// angle, Gauss in the polar cosine for `d = 3`.
    pub fn new(dim: usize, radial: usize, angular: usize) -> Self {
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let rad = gauss_interval(radial, 0.0, 1.0);
        if dim == 2 {
            for &(r, wr) in &rad {
                for k in 0..angular {
                    let t = std::f64::consts::TAU * (k as f64 + 0.5) / angular as f64;
                    offsets.push([r * t.cos(), r * t.sin(), 0.0]);
                    weights.push(wr * r);
                }
            }
        } else {
            let polar = gauss_interval(angular.div_ceil(2).max(2), -1.0, 1.0);
            for &(r, wr) in &rad {
                for &(c, wc) in &polar {
                    let s = (1.0 - c * c).sqrt();
                    for k in 0..angular {
                        let t = std::f64::consts::TAU * (k as f64 + 0.5) / angular as f64;
                        offsets.push([r * s * t.cos(), r * s * t.sin(), r * c]);
                        weights.push(wr * r * r * wc);
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        BallRule { offsets, weights }
    }

    /// Default rule for ball averages.
    pub fn standard(dim: usize) -> Self {
        if dim == 2 {
            Self::new(2, 4, 12)
        } else {
            Self::new(3, 3, 8)
        }
    }
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS7_WEIGHTS[3] * fc;
    for (k, &x) in KRONROD_NODES.iter().take(7).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kronrod += KRONROD_WEIGHTS[k] * s;
        if k % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let whole = gk15(&f, a, b).0.abs().max(1e-300);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        if err <= tol * whole.max(v.abs()) || depth >= 48 || hi - lo < 1e-14 * (b - a).abs() {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_rule_degree_four() {
        let rule = triangle_degree4();
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum::<f64>()
                    * 0.5;
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert!((q - exact).abs() < 1e-14, "x^{a} y^{b}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn tetrahedron_rule_degree_five() {
        let rule = tetrahedron_degree5();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                for c in 0..=(5 - a - b) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| {
                            w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32)
                        })
                        .sum::<f64>()
                        / 6.0;
                    let exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                    assert!((q - exact).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn ball_rule_second_moment() {
        // average of y^2 over the unit disk is 1/4, over the unit ball 1/5
        for (dim, expected) in [(2, 0.25), (3, 0.2)] {
            let rule = BallRule::standard(dim);
            let m: f64 = rule
                .offsets
                .iter()
                .zip(&rule.weights)
                .map(|(o, w)| w * o[1] * o[1])
                .sum();
            assert!((m - expected).abs() < 1e-14, "{dim}: {m}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let y: f64 = 1e-3;
        let v = adaptive_integrate(|t| y / (t * t + y * y), -1.0, 1.0, 1e-12);
        let exact = 2.0 * (1.0 / y).atan();
        assert!((v - exact).abs() < 1e-10);
    }
}
