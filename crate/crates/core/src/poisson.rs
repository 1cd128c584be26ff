//! Half-plane oracles in `d = 2`: the Poisson extension of boundary data
//! and the Hardy–Littlewood maximal function, by adaptive quadrature.

use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::fields::VectorFunction;
use crate::geometry::Point;
use crate::quadrature::adaptive_integrate;

/// `u(x, t) = (1/π) ∫ t f(y) / ((x - y)² + t²) dy` for data supported in
/// `[lo, hi]`. Extended by `f` itself on `t ≤ 0`.
pub struct PoissonExtension<'a> {
    datum: &'a dyn VectorFunction,
    support: (f64, f64),
    tol: f64,
}

impl<'a> PoissonExtension<'a> {
    pub fn new(datum: &'a dyn VectorFunction, support: (f64, f64)) -> Result<Self> {
        if !(support.0 < support.1) {
            return Err(invalid("support", "empty support interval"));
        }
        Ok(PoissonExtension {
            datum,
            support,
            tol: 1e-11,
        })
    }

    fn boundary(&self, y: f64, a: usize) -> C64 {
        let mut out = vec![C64::new(0.0, 0.0); self.datum.components()];
        self.datum.eval(&[y, 0.0, 0.0], &mut out);
        out[a]
    }
}

impl VectorFunction for PoissonExtension<'_> {
    fn components(&self) -> usize {
        self.datum.components()
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        let t = x[1];
        if t <= 0.0 {
            self.datum.eval(&[x[0], 0.0, 0.0], out);
            return;
        }
        let (lo, hi) = self.support;
        // split at the peak of the kernel
        let mut cuts = vec![lo];
        if x[0] > lo && x[0] < hi {
            cuts.push(x[0]);
        }
        cuts.push(hi);
        for (a, o) in out.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for w in cuts.windows(2) {
                let kernel = |y: f64| t / (std::f64::consts::PI * ((x[0] - y).powi(2) + t * t));
                re += adaptive_integrate(|y| kernel(y) * self.boundary(y, a).re, w[0], w[1], self.tol);
                im += adaptive_integrate(|y| kernel(y) * self.boundary(y, a).im, w[0], w[1], self.tol);
            }
            *o = C64::new(re, im);
        }
    }

    fn describe(&self) -> String {
        format!("Poisson extension of {}", self.datum.describe())
    }
}

/// `Mf(z) = sup_r (2r)^{-1} ∫_{z-r}^{z+r} |f|`, with the sup over a
/// geometric grid of radii from `r_min` to `r_max` (ratio `2^{1/8}`).
pub fn hardy_littlewood(datum: &dyn VectorFunction, support: (f64, f64), z: f64, r_min: f64, r_max: f64) -> f64 {
    let m = datum.components();
    let abs_f = |y: f64| {
        let mut out = vec![C64::new(0.0, 0.0); m];
        datum.eval(&[y, 0.0, 0.0], &mut out);
        out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    };
    let mut best: f64 = 0.0;
    let mut r = r_min;
    while r <= r_max * (1.0 + 1e-12) {
        let (a, b) = ((z - r).max(support.0), (z + r).min(support.1));
        if b > a {
            best = best.max(adaptive_integrate(abs_f, a, b, 1e-10) / (2.0 * r));
        }
        r *= 2f64.powf(0.125);
    }
    best
}
