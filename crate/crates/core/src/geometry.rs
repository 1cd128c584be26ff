//! Lipschitz graph domains `{x_d > psi(x')}` with piecewise-linear profiles,
//! nontangential cones, surface balls and cubes, and Carleson boxes.
//!
//! Points are stored as `[f64; 3]`; in two dimensions the third coordinate is
//! unused and the vertical coordinate is index 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 3];

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// Something with an interior, a boundary and a distance function.
pub trait Domain: Sync {
    fn dim(&self) -> usize;

    /// Strict interior membership.
    fn contains(&self, x: &Point) -> bool;

    /// `dist(x, boundary)`; errors for points outside the open domain.
    fn distance_to_boundary(&self, x: &Point) -> Result<f64>;

    fn on_boundary(&self, z: &Point, tol: f64) -> bool;
}

/// Piecewise-linear boundary profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `d = 2`: knots `xs` (strictly increasing) with values.
    Knots { xs: Vec<f64>, values: Vec<f64> },
    /// `d = 3`: heights on the tensor grid `xs × ys`, row-major in `y`
    /// (`heights[j * xs.len() + i]`). Each grid cell is split along the
    /// diagonal from `(x_i, y_j)` to `(x_{i+1}, y_{j+1})`.
    Grid {
        xs: Vec<f64>,
        ys: Vec<f64>,
        heights: Vec<f64>,
    },
}

impl Profile {
    pub fn dim(&self) -> usize {
        match self {
            Profile::Knots { .. } => 2,
            Profile::Grid { .. } => 3,
        }
    }
}

/// Locates `x` in the sorted breakpoints; returns the interval index and the
/// local coordinate in `[0, 1]`, clamping outside the range.
fn locate_interval(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    if x <= xs[0] {
        return (0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 2, 1.0);
    }
    let k = xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    (k, (x - xs[k]) / (xs[k + 1] - xs[k]))
}

/// Region above a Lipschitz graph, truncated for computation to
/// `|x'|_inf < R`, `x_d < R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDomain {
    profile: Profile,
    lipschitz: f64,
    truncation: f64,
}

impl GraphDomain {
    pub fn new(profile: Profile, truncation: f64) -> Result<Self> {
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(invalid("truncation", "must be positive and finite"));
        }
        let lipschitz = match &profile {
            Profile::Knots { xs, values } => {
                check_breakpoints("knots", xs)?;
                if values.len() != xs.len() || values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("knots", "one finite value per knot required"));
                }
                xs.windows(2)
                    .zip(values.windows(2))
                    .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
                    .fold(0.0, f64::max)
            }
            Profile::Grid { xs, ys, heights } => {
                check_breakpoints("grid x", xs)?;
                check_breakpoints("grid y", ys)?;
                if heights.len() != xs.len() * ys.len() || heights.iter().any(|v| !v.is_finite())
                {
                    return Err(invalid("grid", "heights must be a finite nx*ny table"));
                }
                let nx = xs.len();
                let h = |i: usize, j: usize| heights[j * nx + i];
                let mut m: f64 = 0.0;
                for j in 0..ys.len() - 1 {
                    for i in 0..nx - 1 {
                        let (dx, dy) = (xs[i + 1] - xs[i], ys[j + 1] - ys[j]);
                        // lower triangle (00, 10, 11)
                        let gx = (h(i + 1, j) - h(i, j)) / dx;
                        let gy = (h(i + 1, j + 1) - h(i + 1, j)) / dy;
                        m = m.max(gx.hypot(gy));
                        // upper triangle (00, 11, 01)
                        let gy = (h(i, j + 1) - h(i, j)) / dy;
                        let gx = (h(i + 1, j + 1) - h(i, j + 1)) / dx;
                        m = m.max(gx.hypot(gy));
                    }
                }
                m
            }
        };
        let domain = GraphDomain {
            profile,
            lipschitz,
            truncation,
        };
        let origin = domain.psi(&[0.0, 0.0]);
        if origin.abs() > 1e-12 {
            return Err(invalid(
                "profile",
                format!("psi(0) must be 0 (got {origin:e})"),
            ));
        }
        Ok(domain)
    }

    /// Flat boundary `psi = 0`.
    pub fn flat(dim: usize, truncation: f64) -> Result<Self> {
        let profile = match dim {
            2 => Profile::Knots {
                xs: vec![-1.0, 1.0],
                values: vec![0.0, 0.0],
            },
            3 => Profile::Grid {
                xs: vec![-1.0, 1.0],
                ys: vec![-1.0, 1.0],
                heights: vec![0.0; 4],
            },
            _ => return Err(invalid("dim", "only d = 2 and d = 3 are supported")),
        };
        Self::new(profile, truncation)
    }

    /// Tilted line `psi(x) = slope * x` on `[-extent, extent]`, constant outside.
    pub fn tilted(slope: f64, extent: f64, truncation: f64) -> Result<Self> {
        Self::new(
            Profile::Knots {
                xs: vec![-extent, extent],
                values: vec![-slope * extent, slope * extent],
            },
            truncation,
        )
    }

    /// Sawtooth with slopes `±slope`, valleys at multiples of `period`
    /// (one of them at the origin) and peaks of height `slope * period / 2`.
    pub fn sawtooth(slope: f64, period: f64, extent: f64, truncation: f64) -> Result<Self> {
        if !(period > 0.0) || !(slope >= 0.0) {
            return Err(invalid("sawtooth", "period must be positive, slope nonnegative"));
        }
        let half = period / 2.0;
        let n = (extent / half).ceil() as i64;
        let xs: Vec<f64> = (-n..=n).map(|k| k as f64 * half).collect();
        let values = (-n..=n)
            .map(|k| if k.rem_euclid(2) == 0 { 0.0 } else { slope * half })
            .collect();
        Self::new(Profile::Knots { xs, values }, truncation)
    }

    /// Random piecewise-linear profile through the origin with slopes drawn
    /// in `[-lipschitz, lipschitz]`; the first interval right of the origin
    /// has slope exactly `lipschitz`, so `M` is attained.
    pub fn random_piecewise_linear<R: Rng>(
        lipschitz: f64,
        spacing: f64,
        extent: f64,
        truncation: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = (extent / spacing).ceil() as i64;
        let xs: Vec<f64> = (-n..=n).map(|k| k as f64 * spacing).collect();
        let mut values = vec![0.0; xs.len()];
        let mid = n as usize;
        let mut slopes: Vec<f64> = (0..xs.len() - 1)
            .map(|_| rng.gen_range(-lipschitz..=lipschitz))
            .collect();
        slopes[mid] = lipschitz;
        for k in mid + 1..xs.len() {
            values[k] = values[k - 1] + slopes[k - 1] * spacing;
        }
        for k in (0..mid).rev() {
            values[k] = values[k + 1] - slopes[k] * spacing;
        }
        Self::new(Profile::Knots { xs, values }, truncation)
    }

    /// `d = 3` profile `psi = c * min(|x|, w)` style pyramid built on a grid:
    /// heights `slope * (|x| + |y|)` clamped at `slope * cap`, sampled on a
    /// uniform grid of spacing `spacing` over `[-extent, extent]^2`.
    pub fn ridge_grid(slope: f64, spacing: f64, extent: f64, truncation: f64) -> Result<Self> {
        let n = (extent / spacing).round() as i64;
        let xs: Vec<f64> = (-n..=n).map(|k| k as f64 * spacing).collect();
        let ys = xs.clone();
        let mut heights = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                heights.push(slope * x.abs().max(y.abs()).min(extent / 2.0));
            }
        }
        Self::new(Profile::Grid { xs, ys, heights }, truncation)
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Certified Lipschitz constant: the maximal slope of the profile data.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn with_truncation(&self, truncation: f64) -> Result<Self> {
        Self::new(self.profile.clone(), truncation)
    }

    /// Checks a user-declared Lipschitz constant against the certified one.
    pub fn check_declared_lipschitz(&self, declared: f64) -> Result<()> {
        let tol = 1e-9 * self.lipschitz.max(1.0);
        if (declared - self.lipschitz).abs() > tol {
            return Err(invalid(
                "M",
                format!(
                    "declared Lipschitz constant {declared} does not match the maximal knot slope {}",
                    self.lipschitz
                ),
            ));
        }
        Ok(())
    }

    /// Index of the vertical coordinate.
    #[inline]
    pub fn vertical(&self) -> usize {
        self.dim() - 1
    }

    /// Profile value at the projection `xp` (length `d - 1`; extra entries ignored).
    pub fn psi(&self, xp: &[f64]) -> f64 {
        match &self.profile {
            Profile::Knots { xs, values } => {
                let (k, s) = locate_interval(xs, xp[0]);
                values[k] + s * (values[k + 1] - values[k])
            }
            Profile::Grid { xs, ys, heights } => {
                let nx = xs.len();
                let (i, sx) = locate_interval(xs, xp[0]);
                let (j, sy) = locate_interval(ys, xp[1]);
                let h00 = heights[j * nx + i];
                let h10 = heights[j * nx + i + 1];
                let h01 = heights[(j + 1) * nx + i];
                let h11 = heights[(j + 1) * nx + i + 1];
                if sx >= sy {
                    h00 + sx * (h10 - h00) + sy * (h11 - h10)
                } else {
                    h00 + sy * (h01 - h00) + sx * (h11 - h01)
                }
            }
        }
    }

    /// Profile gradient at `xp` (one-sided at kinks).
    pub fn psi_gradient(&self, xp: &[f64]) -> [f64; 2] {
        match &self.profile {
            Profile::Knots { xs, values } => {
                let x = xp[0];
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return [0.0, 0.0];
                }
                let (k, _) = locate_interval(xs, x);
                [(values[k + 1] - values[k]) / (xs[k + 1] - xs[k]), 0.0]
            }
            Profile::Grid { xs, ys, heights } => {
                let nx = xs.len();
                let outside_x = xp[0] < xs[0] || xp[0] > xs[nx - 1];
                let outside_y = xp[1] < ys[0] || xp[1] > ys[ys.len() - 1];
                let (i, sx) = locate_interval(xs, xp[0]);
                let (j, sy) = locate_interval(ys, xp[1]);
                let (dx, dy) = (xs[i + 1] - xs[i], ys[j + 1] - ys[j]);
                let h = |a: usize, b: usize| heights[(j + b) * nx + i + a];
                let (gx, gy) = if sx >= sy {
                    ((h(1, 0) - h(0, 0)) / dx, (h(1, 1) - h(1, 0)) / dy)
                } else {
                    ((h(1, 1) - h(0, 1)) / dx, (h(0, 1) - h(0, 0)) / dy)
                };
                [
                    if outside_x { 0.0 } else { gx },
                    if outside_y { 0.0 } else { gy },
                ]
            }
        }
    }

    /// Surface-measure density `sqrt(1 + |grad psi|^2)` at `xp`.
    pub fn surface_jacobian(&self, xp: &[f64]) -> f64 {
        let g = self.psi_gradient(xp);
        (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt()
    }

    /// The boundary point `(xp, psi(xp))`.
    pub fn boundary_point(&self, xp: &[f64]) -> Point {
        let h = self.psi(xp);
        match self.dim() {
            2 => [xp[0], h, 0.0],
            _ => [xp[0], xp[1], h],
        }
    }

    /// The point at height `t` above the boundary point over `xp`.
    pub fn lift(&self, xp: &[f64], t: f64) -> Point {
        let mut p = self.boundary_point(xp);
        p[self.vertical()] += t;
        p
    }

    pub fn projection(&self, x: &Point) -> [f64; 2] {
        match self.dim() {
            2 => [x[0], 0.0],
            _ => [x[0], x[1]],
        }
    }

    /// Signed vertical gap `x_d - psi(x')`.
    pub fn signed_gap(&self, x: &Point) -> f64 {
        x[self.vertical()] - self.psi(&self.projection(x))
    }

    /// `x_d - psi(x')` for interior points.
    pub fn vertical_gap(&self, x: &Point) -> Result<f64> {
        let gap = self.signed_gap(x);
        if gap > 0.0 {
            Ok(gap)
        } else {
            Err(Error::DomainMembership { point: *x, gap })
        }
    }

    fn extended_breakpoints(&self, xs: &[f64]) -> Vec<f64> {
        let far = 1e4 * (1.0 + self.truncation + xs[xs.len() - 1] - xs[0]);
        let mut ext = Vec::with_capacity(xs.len() + 2);
        ext.push(xs[0] - far);
        ext.extend_from_slice(xs);
        ext.push(xs[xs.len() - 1] + far);
        ext
    }

    fn distance_unchecked(&self, x: &Point, window: f64) -> f64 {
        match &self.profile {
            Profile::Knots { xs, values } => {
                let ext = self.extended_breakpoints(xs);
                let val = |k: usize| values[k.saturating_sub(1).min(values.len() - 1)];
                let lo = ext.partition_point(|&v| v < x[0] - window).saturating_sub(1);
                let hi = (ext.partition_point(|&v| v <= x[0] + window) + 1).min(ext.len());
                let mut best = f64::INFINITY;
                for k in lo..hi.saturating_sub(1) {
                    let a = [ext[k], val(k), 0.0];
                    let b = [ext[k + 1], val(k + 1), 0.0];
                    best = best.min(point_segment_distance(x, &a, &b));
                }
                best
            }
            Profile::Grid { xs, ys, heights } => {
                let ex = self.extended_breakpoints(xs);
                let ey = self.extended_breakpoints(ys);
                let nx = xs.len();
                let h = |i: usize, j: usize| {
                    let ii = i.saturating_sub(1).min(nx - 1);
                    let jj = j.saturating_sub(1).min(ys.len() - 1);
                    heights[jj * nx + ii]
                };
                let range = |e: &[f64], c: f64| {
                    let lo = e.partition_point(|&v| v < c - window).saturating_sub(1);
                    let hi = (e.partition_point(|&v| v <= c + window) + 1).min(e.len());
                    (lo, hi.saturating_sub(1))
                };
                let (i0, i1) = range(&ex, x[0]);
                let (j0, j1) = range(&ey, x[1]);
                let mut best = f64::INFINITY;
                for j in j0..j1 {
                    for i in i0..i1 {
                        let p00 = [ex[i], ey[j], h(i, j)];
                        let p10 = [ex[i + 1], ey[j], h(i + 1, j)];
                        let p11 = [ex[i + 1], ey[j + 1], h(i + 1, j + 1)];
                        let p01 = [ex[i], ey[j + 1], h(i, j + 1)];
                        best = best
                            .min(point_triangle_distance(x, &p00, &p10, &p11))
                            .min(point_triangle_distance(x, &p00, &p11, &p01));
                    }
                }
                best
            }
        }
    }

    /// Rejection-samples a point of the truncated cone `Γ_a^h(z)`, or `None`
    /// after a bounded number of attempts.
    pub fn sample_in_cone<R: Rng>(
        &self,
        z: &Point,
        spec: &ConeSpec,
        max_height: f64,
        rng: &mut R,
    ) -> Option<Point> {
        let d = self.dim();
        let top = spec.height.unwrap_or(max_height).min(max_height);
        for _ in 0..10_000 {
            let t = top * rng.gen::<f64>().powi(2) + 1e-9;
            let reach = spec.aperture * t;
            let mut x = *z;
            for c in 0..d - 1 {
                x[c] += rng.gen_range(-reach..reach);
            }
            let xp = self.projection(&x);
            x[d - 1] = self.psi(&xp) + rng.gen::<f64>() * t * (1.0 + self.lipschitz) + 1e-9;
            if let Ok(true) = cone_contains(self, z, spec, &x) {
                return Some(x);
            }
        }
        None
    }
}

fn check_breakpoints(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.len() < 2 {
        return Err(invalid(name, "at least two breakpoints required"));
    }
    if xs.iter().any(|v| !v.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(name, "breakpoints must be finite and strictly increasing"));
    }
    Ok(())
}

impl Domain for GraphDomain {
    fn dim(&self) -> usize {
        self.profile.dim()
    }

    fn contains(&self, x: &Point) -> bool {
        self.signed_gap(x) > 0.0
    }

    /// Exact distance to the piecewise-linear graph. Only facets within the
    /// vertical gap of `x` can be closer than the point straight below.
    fn distance_to_boundary(&self, x: &Point) -> Result<f64> {
        let gap = self.vertical_gap(x)?;
        Ok(self.distance_unchecked(x, gap).min(gap))
    }

    fn on_boundary(&self, z: &Point, tol: f64) -> bool {
        self.signed_gap(z).abs() <= tol
    }
}

pub(crate) fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 {
        (dot(&ap, &ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dist(p, &q)
}

/// Closest-point distance from `p` to the triangle `abc` (Ericson, RTCD 5.1.5).
pub(crate) fn point_triangle_distance(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return dist(p, a);
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return dist(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        let q = [a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]];
        return dist(p, &q);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return dist(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        let q = [a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]];
        return dist(p, &q);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = sub(c, b);
        let q = [b[0] + w * bc[0], b[1] + w * bc[1], b[2] + w * bc[2]];
        return dist(p, &q);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q = [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ];
    dist(p, &q)
}

/// Aperture and optional truncation height of `Γ_a^h(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub aperture: f64,
    pub height: Option<f64>,
}

impl ConeSpec {
    /// Validated cone spec for a domain with Lipschitz constant `lipschitz`.
    pub fn new(aperture: f64, height: Option<f64>, lipschitz: f64) -> Result<Self> {
        if !(aperture > 1.0 + 2.0 * lipschitz) {
            return Err(invalid(
                "aperture",
                format!(
                    "aperture must exceed 1+2M = {} (got {aperture})",
                    fmt_num(1.0 + 2.0 * lipschitz)
                ),
            ));
        }
        if let Some(h) = height {
            if !(h > 0.0) {
                return Err(invalid("height", "truncation height must be positive"));
            }
        }
        Ok(ConeSpec { aperture, height })
    }

    /// Default aperture `2(1 + 2M)`, untruncated.
    pub fn default_for(lipschitz: f64) -> Self {
        ConeSpec {
            aperture: default_aperture(lipschitz),
            height: None,
        }
    }

    pub fn truncated(self, h: f64) -> Self {
        ConeSpec {
            height: Some(h),
            ..self
        }
    }

    pub fn untruncated(self) -> Self {
        ConeSpec {
            height: None,
            ..self
        }
    }

    /// `Γ_{2a}^{2h}`.
    pub fn doubled(self) -> Self {
        ConeSpec {
            aperture: 2.0 * self.aperture,
            height: self.height.map(|h| 2.0 * h),
        }
    }

    /// Membership given `|x - z|` and `δ(x)`.
    #[inline]
    pub fn admits(&self, distance_to_apex: f64, delta: f64) -> bool {
        distance_to_apex < self.aperture * delta && self.height.map_or(true, |h| delta < h)
    }
}

pub fn default_aperture(lipschitz: f64) -> f64 {
    2.0 * (1.0 + 2.0 * lipschitz)
}

pub fn fmt_num(v: f64) -> String {
    if v == v.round() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// `x ∈ Γ_a^h(z)`: `|x - z| < a δ(x)` and, when truncated, `δ(x) < h`.
pub fn cone_contains<D: Domain + ?Sized>(
    domain: &D,
    z: &Point,
    spec: &ConeSpec,
    x: &Point,
) -> Result<bool> {
    if !domain.on_boundary(z, 1e-9) {
        return Err(Error::Precondition(format!(
            "cone apex {z:?} is not on the boundary"
        )));
    }
    let delta = domain.distance_to_boundary(x)?;
    Ok(spec.admits(dist(x, z), delta))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Containment {
    Holds,
    Counterexample(Point),
}

/// Certifies `B(x, δ(x)/4) ⊂ Γ_{2a}^{2h}(z)` for `x ∈ Γ_a^h(z)` by sampling
/// the ball on `radial` concentric shells of `angular` directions each.
pub fn ball_in_double_cone<D: Domain + ?Sized>(
    domain: &D,
    z: &Point,
    spec: &ConeSpec,
    x: &Point,
    radial: usize,
    angular: usize,
) -> Result<Containment> {
    if !cone_contains(domain, z, spec, x)? {
        return Err(Error::Precondition(format!(
            "{x:?} is not in the cone with apex {z:?}"
        )));
    }
    let radius = domain.distance_to_boundary(x)? / 4.0;
    let double = spec.doubled();
    let dirs = sphere_directions(domain.dim(), angular);
    for k in 0..=radial {
        let rho = radius * 0.999 * k as f64 / radial.max(1) as f64;
        for dir in &dirs {
            let y = [x[0] + rho * dir[0], x[1] + rho * dir[1], x[2] + rho * dir[2]];
            let inside = domain.contains(&y)
                && domain
                    .distance_to_boundary(&y)
                    .map(|dy| double.admits(dist(&y, z), dy))
                    .unwrap_or(false);
            if !inside {
                return Ok(Containment::Counterexample(y));
            }
            if k == 0 {
                break;
            }
        }
    }
    Ok(Containment::Holds)
}

/// Evenly spread unit directions: a circle in 2-D, a Fibonacci sphere in 3-D.
pub(crate) fn sphere_directions(dim: usize, n: usize) -> Vec<Point> {
    let n = n.max(1);
    if dim == 2 {
        (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect()
    } else {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|k| {
                let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let t = golden * k as f64;
                [r * t.cos(), y, r * t.sin()]
            })
            .collect()
    }
}

/// `Δ_r(z) = {(x', psi(x')) : |x' - z'| < r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBall {
    pub center: [f64; 2],
    pub radius: f64,
}

impl SurfaceBall {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", "surface ball radius must be positive"));
        }
        Ok(SurfaceBall { center, radius })
    }

    pub fn contains_projection(&self, xp: &[f64], dim: usize) -> bool {
        let mut s = 0.0;
        for c in 0..dim - 1 {
            s += (xp[c] - self.center[c]).powi(2);
        }
        s < self.radius * self.radius
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SurfaceBall {
            center: self.center,
            radius: self.radius * factor,
        }
    }
}

/// Surface cube: `Φ(Q)` is the axis-aligned cube with the given center and side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCube {
    pub center: [f64; 2],
    pub side: f64,
}

impl SurfaceCube {
    pub fn new(center: [f64; 2], side: f64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(invalid("side", "surface cube side must be positive"));
        }
        Ok(SurfaceCube { center, side })
    }

    /// `αQ = Φ^{-1}(α Φ(Q))`: same center, side scaled by `α`.
    pub fn dilate(&self, alpha: f64) -> Self {
        SurfaceCube {
            center: self.center,
            side: self.side * alpha,
        }
    }

    pub fn half_side(&self) -> f64 {
        self.side / 2.0
    }

    pub fn contains_projection(&self, xp: &[f64], dim: usize) -> bool {
        (0..dim - 1).all(|c| (xp[c] - self.center[c]).abs() < self.side / 2.0)
    }

    /// `self ⊆ other` for the projected cubes.
    pub fn within(&self, other: &SurfaceCube, dim: usize) -> bool {
        (0..dim - 1).all(|c| {
            (self.center[c] - other.center[c]).abs() + self.side / 2.0
                <= other.side / 2.0 + 1e-12 * other.side
        })
    }

    /// `(lo, hi)` of the projection along each axis.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let h = self.side / 2.0;
        (
            [self.center[0] - h, self.center[1] - h],
            [self.center[0] + h, self.center[1] + h],
        )
    }
}

/// Carleson box `D_r = {|x'| < r, psi(x') < x_d < 2(M+1) r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub radius: f64,
    pub top: f64,
    pub dim: usize,
}

/// `D_r` as a meshable region. Also certifies `D_{5ar} ⊂ B(0, 10a(M+2)r)`.
pub fn carleson_box_mesh_region(
    domain: &GraphDomain,
    radius: f64,
    aperture: f64,
) -> Result<CarlesonBox> {
    if !(radius > 0.0) {
        return Err(invalid("radius", "Carleson box radius must be positive"));
    }
    let m = domain.lipschitz();
    let limit = domain.truncation() / (2.0 * (m + 1.0));
    if radius > limit * (1.0 + 1e-12) {
        return Err(invalid(
            "radius",
            format!("r = {radius} exceeds R_trunc / (2(M+1)) = {limit}"),
        ));
    }
    // The farthest point of D_{5ar} from the origin is a top corner.
    let big = 5.0 * aperture * radius;
    let corner = big.hypot(2.0 * (m + 1.0) * big);
    let ball = 10.0 * aperture * (m + 2.0) * radius;
    if corner >= ball {
        return Err(Error::Geometry(format!(
            "D_(5ar) is not inside B(0, 10a(M+2)r): corner at {corner} vs radius {ball}"
        )));
    }
    Ok(CarlesonBox {
        radius,
        top: 2.0 * (m + 1.0) * radius,
        dim: domain.dim(),
    })
}

/// `k = 10 a (M + 2)`.
pub fn ball_factor(aperture: f64, lipschitz: f64) -> f64 {
    10.0 * aperture * (lipschitz + 2.0)
}

/// Critical reverse Hölder exponent `2(d-1)/(d-2)` (infinite for `d = 2`).
pub fn critical_exponent(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        2.0 * (dim as f64 - 1.0) / (dim as f64 - 2.0)
    }
}

/// Regions over which volume integrals are taken. Membership is tested on
/// points of the domain.
pub trait Region: Sync {
    fn contains(&self, x: &Point) -> bool;

    /// Axis-aligned bounding box, used for culling.
    fn bounds(&self) -> Option<(Point, Point)>;

    /// Convex regions contain a simplex whenever they contain its vertices.
    fn is_convex(&self) -> bool {
        false
    }

    /// The region as a Euclidean ball, when it is one (enables exact culling).
    fn ball(&self) -> Option<(Point, f64)> {
        None
    }
}

/// The whole computational domain.
pub struct Everywhere;

impl Region for Everywhere {
    fn contains(&self, _x: &Point) -> bool {
        true
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        None
    }

    fn is_convex(&self) -> bool {
        true
    }
}

/// Open Euclidean ball (intersected with the domain by the mesh).
#[derive(Debug, Clone, Copy)]
pub struct BallRegion {
    pub center: Point,
    pub radius: f64,
    pub dim: usize,
}

impl Region for BallRegion {
    fn contains(&self, x: &Point) -> bool {
        dist(x, &self.center) < self.radius
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        let r = self.radius;
        let c = self.center;
        let mut lo = [c[0] - r, c[1] - r, c[2] - r];
        let mut hi = [c[0] + r, c[1] + r, c[2] + r];
        if self.dim == 2 {
            lo[2] = f64::NEG_INFINITY;
            hi[2] = f64::INFINITY;
        }
        Some((lo, hi))
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn ball(&self) -> Option<(Point, f64)> {
        Some((self.center, self.radius))
    }
}

impl Region for CarlesonBox {
    fn contains(&self, x: &Point) -> bool {
        let v = self.dim - 1;
        let r2: f64 = (0..v).map(|c| x[c] * x[c]).sum();
        r2 < self.radius * self.radius && x[v] < self.top
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        let r = self.radius;
        if self.dim == 2 {
            Some((
                [-r, f64::NEG_INFINITY, f64::NEG_INFINITY],
                [r, self.top, f64::INFINITY],
            ))
        } else {
            Some(([-r, -r, f64::NEG_INFINITY], [r, r, self.top]))
        }
    }

    fn is_convex(&self) -> bool {
        // the box intersected with the (possibly non-convex) domain; mesh
        // simplices already lie in the domain
        true
    }
}

/// `Γ_a^h(z)` as an integration region.
pub struct ConeRegion<'a, D: Domain + ?Sized> {
    pub domain: &'a D,
    pub apex: Point,
    pub spec: ConeSpec,
}

impl<D: Domain + ?Sized> Region for ConeRegion<'_, D> {
    fn contains(&self, x: &Point) -> bool {
        match self.domain.distance_to_boundary(x) {
            Ok(delta) => self.spec.admits(dist(x, &self.apex), delta),
            Err(_) => false,
        }
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        let h = self.spec.height?;
        // |x - z| < a δ(x) < a h
        let r = self.spec.aperture * h;
        let c = self.apex;
        Some(([c[0] - r, c[1] - r, c[2] - r], [c[0] + r, c[1] + r, c[2] + r]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_distance_is_height() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        assert_eq!(dom.distance_to_boundary(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(dom.distance_to_boundary(&[5.0, 0.25, 0.0]).unwrap(), 0.25);
        let dom3 = GraphDomain::flat(3, 10.0).unwrap();
        assert!((dom3.distance_to_boundary(&[3.0, -2.0, 0.7]).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn points_on_or_below_graph_are_rejected() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        assert!(matches!(
            dom.distance_to_boundary(&[0.0, 0.0, 0.0]),
            Err(Error::DomainMembership { .. })
        ));
        assert!(dom.vertical_gap(&[0.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn vertical_gap_examples() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        assert_eq!(dom.vertical_gap(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let vee = GraphDomain::new(
            Profile::Knots {
                xs: vec![-5.0, 0.0, 5.0],
                values: vec![5.0, 0.0, 5.0],
            },
            10.0,
        )
        .unwrap();
        assert_eq!(vee.vertical_gap(&[1.0, 2.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn sawtooth_distance_matches_dense_sampling() {
        let dom = GraphDomain::sawtooth(1.0, 1.0, 4.0, 8.0).unwrap();
        assert_eq!(dom.lipschitz(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(0.6..1.5), 0.0];
            let exact = dom.distance_to_boundary(&x).unwrap();
            // dense boundary sampling oracle: exact on knots, so refine to 1e-6
            let n = 400_000;
            let mut best = f64::INFINITY;
            for k in 0..=n {
                let s = -4.0 + 8.0 * k as f64 / n as f64;
                let b = dom.boundary_point(&[s]);
                best = best.min(dist(&x, &b));
            }
            assert!(exact <= best + 1e-12);
            assert!(best - exact < 1e-9 + 1e-5 * 1e-5, "{best} vs {exact}");
        }
        // above a valley vertex the nearest points lie on the two slopes
        let d = dom.distance_to_boundary(&[0.0, 0.3, 0.0]).unwrap();
        assert!((d - 0.3 / 2f64.sqrt()).abs() < 1e-12);
        // above a peak the apex itself is nearest
        let d = dom.distance_to_boundary(&[0.5, 1.5, 0.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_profile_interpolates_and_is_lipschitz() {
        let dom = GraphDomain::ridge_grid(0.5, 0.25, 1.0, 4.0).unwrap();
        // the interpolant of max(|x|, |y|) has gradient (±1, ±1)/2 on the
        // cells cut against the level lines
        let m = dom.lipschitz();
        assert!(m >= 0.5 && m <= 0.5 * 2f64.sqrt() + 1e-12, "{m}");
        assert!((dom.psi(&[0.25, 0.0]) - 0.125).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let lhs = (dom.psi(&a) - dom.psi(&b)).abs();
            let rhs = dom.lipschitz() * (a[0] - b[0]).hypot(a[1] - b[1]);
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn cone_membership_examples() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        let z = [0.0, 0.0, 0.0];
        let spec = ConeSpec::new(2.0, None, 0.0).unwrap();
        assert!(cone_contains(&dom, &z, &spec, &[0.0, 1.0, 0.0]).unwrap());
        assert!(!cone_contains(&dom, &z, &spec, &[3.0, 1.0, 0.0]).unwrap());
        let trunc = spec.truncated(0.5);
        assert!(!cone_contains(&dom, &z, &trunc, &[0.0, 1.0, 0.0]).unwrap());
    }

    #[test]
    fn aperture_validation_message() {
        let err = ConeSpec::new(1.0, None, 0.5).unwrap_err();
        assert!(err.to_string().contains("aperture must exceed 1+2M = 2"), "{err}");
        assert!(ConeSpec::new(3.0, Some(0.0), 0.5).is_err());
    }

    #[test]
    fn ball_in_double_cone_examples() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        let z = [0.0, 0.0, 0.0];
        let spec = ConeSpec::new(2.0, Some(1.0), 0.0).unwrap();
        let got = ball_in_double_cone(&dom, &z, &spec, &[0.0, 0.5, 0.0], 8, 64).unwrap();
        assert_eq!(got, Containment::Holds);
        // at the cone's edge: |x - z| = 0.999 a δ(x) with δ = 0.4
        let delta: f64 = 0.4;
        let reach = 0.999 * 2.0 * delta;
        let x = [(reach * reach - delta * delta).sqrt(), delta, 0.0];
        assert_eq!(
            ball_in_double_cone(&dom, &z, &spec, &x, 8, 64).unwrap(),
            Containment::Holds
        );
        assert!(ball_in_double_cone(&dom, &z, &spec, &[5.0, 0.5, 0.0], 4, 8).is_err());
    }

    #[test]
    fn carleson_box_examples() {
        let dom = GraphDomain::flat(2, 10.0).unwrap();
        let b = carleson_box_mesh_region(&dom, 1.0, 2.0).unwrap();
        assert_eq!(b.top, 2.0);
        assert!(b.contains(&[0.5, 1.9, 0.0]));
        assert!(!b.contains(&[1.5, 1.0, 0.0]));
        assert!(carleson_box_mesh_region(&dom, 6.0, 2.0).is_err());
        assert_eq!(ball_factor(4.0, 1.0), 120.0);
        assert_eq!(critical_exponent(3), 4.0);
    }

    #[test]
    fn cube_dilation_fixes_center() {
        let q = SurfaceCube::new([0.25, -0.5], 0.5).unwrap();
        let big = q.dilate(3.0);
        assert_eq!(big.center, q.center);
        assert_eq!(big.side, 1.5);
        assert!(q.within(&big, 3));
        assert!(!big.within(&q, 3));
    }

    #[test]
    fn psi_origin_normalization_enforced() {
        let err = GraphDomain::new(
            Profile::Knots {
                xs: vec![-1.0, 1.0],
                values: vec![1.0, 1.0],
            },
            4.0,
        );
        assert!(err.is_err());
    }
}
