//! Closed-form vector fields: boundary data, manufactured solutions and the
//! analytic test fields used by the verifiers.

use num_complex::Complex64 as C64;

use crate::geometry::{GraphDomain, Point};

/// A function `R^d → C^m`.
pub trait VectorFunction: Send + Sync {
    fn components(&self) -> usize;

    fn eval(&self, x: &Point, out: &mut [C64]);

    /// Short description recorded in reports.
    fn describe(&self) -> String {
        String::from("function")
    }
}

/// A closed-form field with gradients (`out[α][i] = ∂_i u^α`).
pub trait AnalyticField: VectorFunction {
    fn gradient(&self, x: &Point, out: &mut [[C64; 3]]);
}

/// `η(s) = exp(1 - 1/(1 - s²))` for `|s| < 1`, zero otherwise; `η(0) = 1`.
pub fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bump {
    pub center: Point,
    pub width: f64,
    /// One amplitude per component.
    pub amplitude: Vec<C64>,
}

/// Sum of smooth compactly supported bumps `Σ A η(|x - c| / w)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BumpDatum {
    pub bumps: Vec<Bump>,
    pub m: usize,
}

impl BumpDatum {
    pub fn single(center: Point, width: f64, amplitude: Vec<C64>) -> Self {
        let m = amplitude.len();
        BumpDatum {
            bumps: vec![Bump {
                center,
                width,
                amplitude,
            }],
            m,
        }
    }

    pub fn zero(m: usize) -> Self {
        BumpDatum { bumps: Vec::new(), m }
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bumps {
            for a in &mut b.amplitude {
                *a *= c;
            }
        }
        out
    }

    /// Largest distance from the origin reached by any support.
    pub fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| crate::geometry::norm(&b.center) + b.width)
            .fold(0.0, f64::max)
    }
}

impl VectorFunction for BumpDatum {
    fn components(&self) -> usize {
        self.m
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for b in &self.bumps {
            let s = crate::geometry::dist(x, &b.center) / b.width;
            let e = bump_profile(s);
            if e > 0.0 {
                for (o, a) in out.iter_mut().zip(&b.amplitude) {
                    *o += a * e;
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("{} bump(s)", self.bumps.len())
    }
}

impl AnalyticField for BumpDatum {
    fn gradient(&self, x: &Point, out: &mut [[C64; 3]]) {
        out.iter_mut().for_each(|g| *g = [C64::new(0.0, 0.0); 3]);
        for b in &self.bumps {
            let r = crate::geometry::dist(x, &b.center);
            let s = r / b.width;
            if s >= 1.0 || r == 0.0 {
                continue;
            }
            // η'(s) = -2s η(s) / (1 - s²)²
            let ds = -2.0 * s * bump_profile(s) / (1.0 - s * s).powi(2) / (b.width * r);
            for (g, a) in out.iter_mut().zip(&b.amplitude) {
                for c in 0..3 {
                    g[c] += a * (ds * (x[c] - b.center[c]));
                }
            }
        }
    }
}

/// Constant field `c`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub Vec<C64>);

impl VectorFunction for ConstantField {
    fn components(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _x: &Point, out: &mut [C64]) {
        out.copy_from_slice(&self.0);
    }

    fn describe(&self) -> String {
        "constant".into()
    }
}

impl AnalyticField for ConstantField {
    fn gradient(&self, _x: &Point, out: &mut [[C64; 3]]) {
        out.iter_mut().for_each(|g| *g = [C64::new(0.0, 0.0); 3]);
    }
}

/// Affine scalar field `c + g·x`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub constant: C64,
    pub slope: [C64; 3],
}

impl VectorFunction for AffineField {
    fn components(&self) -> usize {
        1
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        out[0] = self.constant + self.slope[0] * x[0] + self.slope[1] * x[1] + self.slope[2] * x[2];
    }
}

impl AnalyticField for AffineField {
    fn gradient(&self, _x: &Point, out: &mut [[C64; 3]]) {
        out[0] = self.slope;
    }
}

/// Radial smooth cutoff of the projection: `1` for `|x' - z'| ≤ inner`,
/// `0` for `≥ outer`, cubic smoothstep (C¹) in between.
#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    pub center: [f64; 2],
    pub inner: f64,
    pub outer: f64,
    pub dim: usize,
}

impl Cutoff {
    pub fn value(&self, x: &Point) -> f64 {
        let mut r2 = 0.0;
        for c in 0..self.dim - 1 {
            r2 += (x[c] - self.center[c]).powi(2);
        }
        let r = r2.sqrt();
        if r <= self.inner {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            let s = (r - self.inner) / (self.outer - self.inner);
            1.0 - s * s * (3.0 - 2.0 * s)
        }
    }
}

/// `φ f` for a cutoff `φ`.
pub struct CutoffDatum<'a> {
    pub cutoff: Cutoff,
    pub inner: &'a dyn VectorFunction,
}

impl VectorFunction for CutoffDatum<'_> {
    fn components(&self) -> usize {
        self.inner.components()
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        let phi = self.cutoff.value(x);
        if phi == 0.0 {
            out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        } else {
            self.inner.eval(x, out);
            out.iter_mut().for_each(|o| *o *= phi);
        }
    }

    fn describe(&self) -> String {
        format!("cutoff of {}", self.inner.describe())
    }
}

/// `(x_d - psi(x'))^s` on a graph domain: the sharp family for the Hardy
/// inequality (vanishes on the graph for `s > 0`).
pub struct GapPower<'a> {
    pub domain: &'a GraphDomain,
    pub exponent: f64,
}

impl VectorFunction for GapPower<'_> {
    fn components(&self) -> usize {
        1
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        let g = self.domain.signed_gap(x).max(0.0);
        out[0] = C64::new(g.powf(self.exponent), 0.0);
    }

    fn describe(&self) -> String {
        format!("gap^{}", self.exponent)
    }
}

impl AnalyticField for GapPower<'_> {
    fn gradient(&self, x: &Point, out: &mut [[C64; 3]]) {
        let d = self.domain.dim();
        let g = self.domain.signed_gap(x).max(1e-300);
        let f = self.exponent * g.powf(self.exponent - 1.0);
        let dp = self.domain.psi_gradient(&self.domain.projection(x));
        let mut grad = [C64::new(0.0, 0.0); 3];
        for c in 0..d - 1 {
            grad[c] = C64::new(-f * dp[c], 0.0);
        }
        grad[d - 1] = C64::new(f, 0.0);
        out[0] = grad;
    }
}

/// Smooth manufactured field with closed-form derivatives:
/// `u^α = A_α e^{i k_α x_1} sin(x_d + φ_α) cos(c x_2)` (the cosine factor
/// only in `d = 3`).
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub dim: usize,
    pub amplitude: Vec<C64>,
    pub wavenumber: Vec<f64>,
    pub phase: Vec<f64>,
    pub lateral: f64,
}

impl Manufactured {
    pub fn standard(dim: usize, m: usize) -> Self {
        Manufactured {
            dim,
            amplitude: (0..m).map(|a| C64::from_polar(1.0, 0.4 * a as f64)).collect(),
            wavenumber: (0..m).map(|a| 1.0 - 0.5 * a as f64).collect(),
            phase: (0..m).map(|a| 0.3 + 0.2 * a as f64).collect(),
            lateral: 0.7,
        }
    }

    /// Value, gradient and Hessian of component `a`.
    pub fn jet(&self, a: usize, x: &Point) -> (C64, [C64; 3], [[C64; 3]; 3]) {
        let d = self.dim;
        let i = C64::new(0.0, 1.0);
        let k = self.wavenumber[a];
        let e = (i * k * x[0]).exp() * self.amplitude[a];
        let (s, c) = (x[d - 1] + self.phase[a]).sin_cos();
        let (h, dh, ddh) = if d == 3 {
            let l = self.lateral;
            let (sy, cy) = (l * x[1]).sin_cos();
            (cy, -l * sy, -l * l * cy)
        } else {
            (1.0, 0.0, 0.0)
        };
        let zero = C64::new(0.0, 0.0);
        let v = e * s * h;
        let mut g = [zero; 3];
        let mut hs = [[zero; 3]; 3];
        let ik = i * k;
        g[0] = ik * v;
        g[d - 1] = e * c * h;
        hs[0][0] = ik * ik * v;
        hs[0][d - 1] = ik * e * c * h;
        hs[d - 1][0] = hs[0][d - 1];
        hs[d - 1][d - 1] = -v;
        if d == 3 {
            g[1] = e * s * dh;
            hs[1][1] = e * s * ddh;
            hs[0][1] = ik * e * s * dh;
            hs[1][0] = hs[0][1];
            hs[1][2] = e * c * dh;
            hs[2][1] = hs[1][2];
        }
        (v, g, hs)
    }
}

impl VectorFunction for Manufactured {
    fn components(&self) -> usize {
        self.amplitude.len()
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.jet(a, x).0;
        }
    }

    fn describe(&self) -> String {
        "manufactured".into()
    }
}

impl AnalyticField for Manufactured {
    fn gradient(&self, x: &Point, out: &mut [[C64; 3]]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.jet(a, x).1;
        }
    }
}

/// Right-hand side `-div(a∇u) + b·∇u` of a manufactured field for a
/// coefficient field with constant leading part.
pub struct ManufacturedSource<'a> {
    pub field: &'a Manufactured,
    pub coeffs: &'a crate::coefficients::CoefficientField,
}

impl VectorFunction for ManufacturedSource<'_> {
    fn components(&self) -> usize {
        self.field.components()
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        let (d, m) = (self.coeffs.dim(), self.coeffs.components());
        let mut a = vec![C64::new(0.0, 0.0); d * d * m * m];
        self.coeffs.leading_at(x, &mut a);
        let mut b = vec![C64::new(0.0, 0.0); d * m * m];
        let drift = self.coeffs.drift_at(x, &mut b);
        let jets: Vec<_> = (0..m).map(|be| self.field.jet(be, x)).collect();
        for (al, o) in out.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for (be, (_, g, h)) in jets.iter().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        s -= a[((al * m + be) * d + i) * d + j] * h[i][j];
                    }
                    if drift {
                        s += b[(al * m + be) * d + i] * g[i];
                    }
                }
            }
            *o = s;
        }
    }
}
