//! Modified nontangential maximal functions
//! `N_a^h(u)(z) = sup { (⨍_{B(x, δ(x)/4)} |u|²)^{1/2} : x ∈ Γ_a^h(z) }`
//! evaluated over a cloud of approach points, and surface `L^p` norms.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::VectorFunction;
use crate::geometry::{dist, ConeSpec, ConeRegion, Domain, GraphDomain, Point, SurfaceBall, SurfaceCube};
use crate::integrate::{region_integral, IntegralSpec, MeshField, Weight, WeightContext};
use crate::mesh::{Mesh, VertexKind};
use crate::polygon::Polygon;
use crate::quadrature::BallRule;
use crate::report::InequalityReport;
use crate::solver::Solution;

/// Ball averages use radius `δ(x) / 4`.
pub const BALL_FACTOR: f64 = 0.25;

/// A field that can be sampled pointwise; `false` where it is undefined.
pub trait Sampled: Sync {
    fn components(&self) -> usize;
    fn sample(&self, x: &Point, out: &mut [C64]) -> bool;
}

impl Sampled for Solution {
    fn components(&self) -> usize {
        Solution::components(self)
    }

    fn sample(&self, x: &Point, out: &mut [C64]) -> bool {
        self.value_at(x, out)
    }
}

/// A closed-form field, defined everywhere.
pub struct Exact<'a>(pub &'a dyn VectorFunction);

impl Sampled for Exact<'_> {
    fn components(&self) -> usize {
        self.0.components()
    }

    fn sample(&self, x: &Point, out: &mut [C64]) -> bool {
        self.0.eval(x, out);
        true
    }
}

fn ball_average_with(field: &dyn Sampled, rule: &BallRule, x: &Point, radius: f64, buf: &mut [C64]) -> Option<f64> {
    let mut s = 0.0;
    for (o, w) in rule.offsets.iter().zip(&rule.weights) {
        let y = [x[0] + radius * o[0], x[1] + radius * o[1], x[2] + radius * o[2]];
        if !field.sample(&y, buf) {
            return None;
        }
        s += w * buf.iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    Some(s.sqrt())
}

/// `(⨍_{B(x, δ(x)/4)} |u|²)^{1/2}`.
pub fn ball_l2_average(field: &dyn Sampled, domain: &dyn Domain, x: &Point) -> Result<f64> {
    let delta = domain.distance_to_boundary(x)?;
    let rule = BallRule::standard(domain.dim());
    let mut buf = vec![C64::new(0.0, 0.0); field.components()];
    ball_average_with(field, &rule, x, BALL_FACTOR * delta, &mut buf)
        .ok_or_else(|| Error::Precondition(format!("the ball around {x:?} leaves the field's support")))
}

/// Lateral box and height below which ball averages are trusted: the part
/// of the truncated domain at distance `R_trunc / 4` from artificial faces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrustedBox {
    pub lateral: f64,
    pub top: f64,
}

impl TrustedBox {
    pub fn for_domain(domain: &GraphDomain) -> Self {
        let r = domain.truncation();
        TrustedBox {
            lateral: 0.75 * r,
            top: 0.75 * r,
        }
    }

    fn admits(&self, dim: usize, x: &Point, delta: f64) -> bool {
        let pad = BALL_FACTOR * delta;
        (0..dim - 1).all(|c| x[c].abs() + pad < self.lateral) && x[dim - 1] + pad < self.top
    }
}

/// Layered approach points.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CloudParams {
    /// Gap of the lowest layer.
    pub t_min: f64,
    /// Gap of the highest layer.
    pub t_max: f64,
    /// Layers per octave and points per unit gap laterally.
    pub density: f64,
    /// Largest aperture the cloud is queried with.
    pub aperture: f64,
}

const MAX_CLOUD: usize = 4_000_000;

struct Level {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

/// Approach points with their boundary distances, indexed by dyadic level
/// of `δ` so that cone queries visit a bounded neighbourhood per level.
pub struct ApproachCloud {
    dim: usize,
    points: Vec<Point>,
    deltas: Vec<f64>,
    aperture: f64,
    base: f64,
    levels: Vec<Level>,
    density: f64,
}

impl std::fmt::Debug for ApproachCloud {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApproachCloud")
            .field("points", &self.points.len())
            .field("density", &self.density)
            .finish()
    }
}

impl ApproachCloud {
    /// Indexes the given points; `deltas` must be their boundary distances.
    pub fn from_points(dim: usize, points: Vec<Point>, deltas: Vec<f64>, aperture: f64, density: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Resolution("approach cloud is empty".into()));
        }
        let base = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(base > 0.0) {
            return Err(Error::Precondition("approach points must be interior".into()));
        }
        let mut levels: Vec<Level> = Vec::new();
        for (i, (x, &d)) in points.iter().zip(&deltas).enumerate() {
            let l = ((d / base).log2().floor().max(0.0)) as usize;
            while levels.len() <= l {
                let k = levels.len();
                levels.push(Level {
                    cell: aperture * base * 2f64.powi(k as i32 + 1),
                    buckets: HashMap::new(),
                });
            }
            let key = cell_key(dim, x, levels[l].cell);
            levels[l].buckets.entry(key).or_default().push(i as u32);
        }
        Ok(ApproachCloud {
            dim,
            points,
            deltas,
            aperture,
            base,
            levels,
            density,
        })
    }

    /// Layers `t_k = t_min 2^{k/ρ}` over the lateral box `[lo, hi]` widened
    /// by `a t_k`, lateral spacing `t_k / ρ`, plus the interior mesh vertices
    /// when a mesh is given.
    pub fn graph(
        domain: &GraphDomain,
        lo: [f64; 2],
        hi: [f64; 2],
        params: &CloudParams,
        trusted: Option<TrustedBox>,
        mesh: Option<&Mesh>,
    ) -> Result<Self> {
        check_params(params)?;
        let dim = domain.dim();
        let mut layers: Vec<Vec<Point>> = Vec::new();
        let mut total = 0usize;
        let mut k = 0;
        loop {
            let t = params.t_min * 2f64.powf(k as f64 / params.density);
            if t > params.t_max * (1.0 + 1e-12) {
                break;
            }
            let s = t / params.density;
            let reach = params.aperture * t;
            let mut axes: Vec<Vec<f64>> = Vec::new();
            for c in 0..dim - 1 {
                let (mut a, mut b) = (lo[c] - reach, hi[c] + reach);
                if let Some(tb) = trusted {
                    a = a.max(-tb.lateral);
                    b = b.min(tb.lateral);
                }
                let i0 = (a / s).floor() as i64;
                let i1 = (b / s).ceil() as i64;
                axes.push((i0..=i1).map(|i| i as f64 * s).collect());
            }
            let count: usize = axes.iter().map(|a| a.len()).product();
            total += count;
            if total > MAX_CLOUD {
                return Err(Error::Resolution(format!(
                    "approach cloud exceeds {MAX_CLOUD} points; raise t_min or lower the density"
                )));
            }
            let layer: Vec<Point> = if dim == 2 {
                axes[0].iter().map(|&x| domain.lift(&[x, 0.0], t)).collect()
            } else {
                let mut v = Vec::with_capacity(count);
                for &y in &axes[1] {
                    for &x in &axes[0] {
                        v.push(domain.lift(&[x, y], t));
                    }
                }
                v
            };
            layers.push(layer);
            k += 1;
        }
        let mut candidates: Vec<Point> = layers.into_iter().flatten().collect();
        if let Some(m) = mesh {
            for (v, x) in m.vertices().iter().enumerate() {
                if m.vertex_kind(v) == VertexKind::Interior {
                    candidates.push(*x);
                }
            }
        }
        let kept: Vec<(Point, f64)> = candidates
            .par_iter()
            .filter_map(|x| {
                let d = domain.distance_to_boundary(x).ok()?;
                if d < params.t_min / (2f64.sqrt() * (1.0 + domain.lipschitz())) * 0.5 {
                    return None;
                }
                match trusted {
                    Some(tb) if !tb.admits(dim, x, d) => None,
                    _ => Some((*x, d)),
                }
            })
            .collect();
        let (points, deltas) = kept.into_iter().unzip();
        ApproachCloud::from_points(dim, points, deltas, params.aperture, params.density)
    }

    /// Points along inward normals of every edge and fans around every
    /// vertex, in layers as for graph domains.
    pub fn polygon(poly: &Polygon, params: &CloudParams, mesh: Option<&Mesh>) -> Result<Self> {
        check_params(params)?;
        let mut candidates = Vec::new();
        let mut k = 0;
        loop {
            let t = params.t_min * 2f64.powf(k as f64 / params.density);
            if t > params.t_max * (1.0 + 1e-12) {
                break;
            }
            let s = t / params.density;
            for i in 0..poly.num_edges() {
                let len = poly.edge_length(i);
                let n = (len / s).ceil().max(1.0) as usize;
                let nrm = poly.inward_normal(i);
                for j in 0..=n {
                    let p = poly.edge_point(i, j as f64 / n as f64);
                    candidates.push([p[0] + t * nrm[0], p[1] + t * nrm[1], 0.0]);
                }
                let v = poly.vertices()[i];
                let steps = (std::f64::consts::TAU * params.density).ceil() as usize * 4;
                for j in 0..steps {
                    let phi = std::f64::consts::TAU * j as f64 / steps as f64;
                    candidates.push([v[0] + t * phi.cos(), v[1] + t * phi.sin(), 0.0]);
                }
            }
            if candidates.len() > MAX_CLOUD {
                return Err(Error::Resolution("approach cloud too large".into()));
            }
            k += 1;
        }
        if let Some(m) = mesh {
            for (v, x) in m.vertices().iter().enumerate() {
                if m.vertex_kind(v) == VertexKind::Interior {
                    candidates.push(*x);
                }
            }
        }
        let kept: Vec<(Point, f64)> = candidates
            .par_iter()
            .filter_map(|x| {
                let d = poly.distance_to_boundary(x).ok()?;
                (d > 0.25 * params.t_min).then_some((*x, d))
            })
            .collect();
        let (points, deltas) = kept.into_iter().unzip();
        ApproachCloud::from_points(2, points, deltas, params.aperture, params.density)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Smallest `δ` in the cloud.
    pub fn min_delta(&self) -> f64 {
        self.base
    }

    /// Ball averages of `field` at every point; `NaN` where a ball leaves
    /// the field's domain of definition.
    pub fn averages(&self, field: &dyn Sampled) -> Vec<f64> {
        let rule = BallRule::standard(self.dim);
        let m = field.components();
        self.points
            .par_iter()
            .zip(self.deltas.par_iter())
            .with_min_len(64)
            .map_init(
                || vec![C64::new(0.0, 0.0); m],
                |buf, (x, &d)| ball_average_with(field, &rule, x, BALL_FACTOR * d, buf).unwrap_or(f64::NAN),
            )
            .collect()
    }

    /// Calls `visit(i)` for every cloud point in `Γ_a^h(z)`.
    pub fn for_each_in_cone(&self, z: &Point, spec: &ConeSpec, mut visit: impl FnMut(usize)) -> Result<()> {
        if spec.aperture > self.aperture * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "cloud indexed for aperture {} queried with {}",
                self.aperture, spec.aperture
            )));
        }
        let dim = self.dim;
        for (l, level) in self.levels.iter().enumerate() {
            if let Some(h) = spec.height {
                if self.base * 2f64.powi(l as i32) >= h {
                    break;
                }
            }
            let key = cell_key(dim, z, level.cell);
            let span: i64 = 1;
            for dz in if dim == 3 { -span..=span } else { 0..=0 } {
                for dy in -span..=span {
                    for dx in -span..=span {
                        let cell = [key[0] + dx, key[1] + dy, key[2] + dz];
                        if let Some(ids) = level.buckets.get(&cell) {
                            for &i in ids {
                                let i = i as usize;
                                if spec.admits(dist(&self.points[i], z), self.deltas[i]) {
                                    visit(i);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_params(p: &CloudParams) -> Result<()> {
    if !(p.t_min > 0.0 && p.t_max >= p.t_min) {
        return Err(invalid("cloud", "need 0 < t_min <= t_max"));
    }
    if !(p.density >= 1.0) {
        return Err(invalid("cloud", "density must be at least 1"));
    }
    if !(p.aperture > 1.0) {
        return Err(invalid("cloud", "aperture must exceed 1"));
    }
    Ok(())
}

fn cell_key(dim: usize, x: &Point, cell: f64) -> [i64; 3] {
    let mut k = [0i64; 3];
    for c in 0..dim {
        k[c] = (x[c] / cell).floor() as i64;
    }
    k
}

/// Ball averages of one field on a cloud.
pub struct MaximalEngine<'a> {
    pub cloud: &'a ApproachCloud,
    pub averages: Vec<f64>,
}

impl<'a> MaximalEngine<'a> {
    pub fn new(cloud: &'a ApproachCloud, field: &dyn Sampled) -> Self {
        MaximalEngine {
            cloud,
            averages: cloud.averages(field),
        }
    }

    /// `N_a^h(u)(z)` and the maximizing cloud point (ties go to the lowest index).
    pub fn at(&self, z: &Point, spec: &ConeSpec) -> Result<(f64, Option<usize>)> {
        let mut best = f64::NEG_INFINITY;
        let mut arg = None;
        self.cloud.for_each_in_cone(z, spec, |i| {
            let v = self.averages[i];
            if v.is_nan() {
                return;
            }
            if v > best || (v == best && arg.is_some_and(|a| i < a)) {
                best = v;
                arg = Some(i);
            }
        })?;
        match arg {
            Some(_) => Ok((best, arg)),
            None => match spec.height {
                Some(h) => Err(Error::EmptyCone {
                    height: h,
                    minimum: 2.0 * self.cloud.min_delta(),
                }),
                None => Err(Error::Resolution(format!("no approach point in the cone at {z:?}"))),
            },
        }
    }

    /// `N` at every sample of `sampling`.
    pub fn field(&self, sampling: &SurfaceSampling, spec: &ConeSpec) -> Result<MaximalField> {
        let results: Vec<Result<(f64, Option<usize>)>> =
            sampling.points.par_iter().map(|z| self.at(z, spec)).collect();
        let mut values = Vec::with_capacity(results.len());
        let mut argmax = Vec::with_capacity(results.len());
        for r in results {
            let (v, a) = r?;
            values.push(v);
            argmax.push(a.map(|i| self.cloud.points[i]));
        }
        Ok(MaximalField {
            dim: sampling.dim,
            points: sampling.points.clone(),
            values,
            argmax,
            aperture: spec.aperture,
            height: spec.height,
            ball_factor: BALL_FACTOR,
            density: self.cloud.density,
            refinement_change: None,
        })
    }
}

/// Sampled `N_a^h(u)` on the boundary.
#[derive(Debug, Clone, Serialize)]
pub struct MaximalField {
    pub dim: usize,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub argmax: Vec<Option<Point>>,
    pub aperture: f64,
    pub height: Option<f64>,
    pub ball_factor: f64,
    pub density: f64,
    /// Relative sup change at the last density doubling, when refined.
    pub refinement_change: Option<f64>,
}

impl MaximalField {
    /// Columns: boundary point coordinates, value, argmax coordinates.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let d = self.dim;
        let names = ["1", "2", "3"];
        let mut header: Vec<String> = (0..d).map(|c| format!("z{}", names[c])).collect();
        header.push("value".into());
        header.extend((0..d).map(|c| format!("argmax{}", names[c])));
        w.write_record(&header).expect("in-memory csv");
        for ((z, v), a) in self.points.iter().zip(&self.values).zip(&self.argmax) {
            let mut row: Vec<String> = (0..d).map(|c| format!("{:e}", z[c])).collect();
            row.push(format!("{v:e}"));
            for c in 0..d {
                row.push(a.map_or(String::new(), |p| format!("{:e}", p[c])));
            }
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// Computes `N` on a sequence of clouds of doubling density until the
/// largest relative change drops below `tol`; returns the last field.
pub fn refine_until_stable(
    build: impl Fn(f64) -> Result<ApproachCloud>,
    field: &dyn Sampled,
    sampling: &SurfaceSampling,
    spec: &ConeSpec,
    start: f64,
    max_density: f64,
    tol: f64,
) -> Result<MaximalField> {
    let mut density = start;
    let cloud = build(density)?;
    let mut prev = MaximalEngine::new(&cloud, field).field(sampling, spec)?;
    while density * 2.0 <= max_density {
        density *= 2.0;
        let cloud = build(density)?;
        let mut next = MaximalEngine::new(&cloud, field).field(sampling, spec)?;
        let change = prev
            .values
            .iter()
            .zip(&next.values)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        next.refinement_change = Some(change);
        prev = next;
        if change < tol {
            break;
        }
    }
    Ok(prev)
}

/// Boundary sets used to restrict surface integrals.
pub trait SurfaceRegion: Sync {
    fn contains_boundary_point(&self, z: &Point, dim: usize) -> bool;
}

impl SurfaceRegion for SurfaceBall {
    fn contains_boundary_point(&self, z: &Point, dim: usize) -> bool {
        self.contains_projection(&[z[0], z[1]], dim)
    }
}

impl SurfaceRegion for SurfaceCube {
    fn contains_boundary_point(&self, z: &Point, dim: usize) -> bool {
        self.contains_projection(&[z[0], z[1]], dim)
    }
}

/// `∂Ω ∩ B(center, radius)` for boundaries that are not graphs.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryBall {
    pub center: Point,
    pub radius: f64,
}

impl SurfaceRegion for BoundaryBall {
    fn contains_boundary_point(&self, z: &Point, _dim: usize) -> bool {
        dist(z, &self.center) < self.radius
    }
}

/// Midpoint surface quadrature: boundary points with surface-measure weights.
#[derive(Debug, Clone, Serialize)]
pub struct SurfaceSampling {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SurfaceSampling {
    /// Cells of side about `spacing` over the projected box `[lo, hi]`.
    /// In `d = 2` the profile knots are cell edges, so the rule is exact
    /// for the arclength of the piecewise-linear graph.
    pub fn graph_box(domain: &GraphDomain, lo: [f64; 2], hi: [f64; 2], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        let dim = domain.dim();
        let axis = |c: usize| {
            let n = ((hi[c] - lo[c]) / spacing).round().max(1.0) as usize;
            (0..=n).map(|i| lo[c] + (hi[c] - lo[c]) * i as f64 / n as f64).collect::<Vec<f64>>()
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if dim == 2 {
            let mut nodes = axis(0);
            if let crate::geometry::Profile::Knots { xs, .. } = domain.profile() {
                nodes.extend(xs.iter().filter(|&&x| x > lo[0] && x < hi[0]));
                nodes.sort_by(f64::total_cmp);
                nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * spacing);
            }
            for w in nodes.windows(2) {
                let m = 0.5 * (w[0] + w[1]);
                points.push(domain.boundary_point(&[m, 0.0]));
                weights.push((w[1] - w[0]) * domain.surface_jacobian(&[m, 0.0]));
            }
        } else {
            let (xs, ys) = (axis(0), axis(1));
            for wy in ys.windows(2) {
                for wx in xs.windows(2) {
                    let m = [0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1])];
                    points.push(domain.boundary_point(&m));
                    weights.push((wx[1] - wx[0]) * (wy[1] - wy[0]) * domain.surface_jacobian(&m));
                }
            }
        }
        Ok(SurfaceSampling { dim, points, weights })
    }

    /// Samples of the surface ball `Δ_r(z)`, at least `min_inside` of them.
    pub fn graph_ball(domain: &GraphDomain, ball: &SurfaceBall, per_radius: usize) -> Result<Self> {
        let r = ball.radius;
        let c = ball.center;
        let full = SurfaceSampling::graph_box(
            domain,
            [c[0] - r, c[1] - r],
            [c[0] + r, c[1] + r],
            r / per_radius.max(1) as f64,
        )?;
        Ok(full.restrict(ball))
    }

    /// Midpoint rule on every polygon edge with cells of length about `spacing`.
    pub fn polygon(poly: &Polygon, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..poly.num_edges() {
            let len = poly.edge_length(i);
            let n = (len / spacing).round().max(1.0) as usize;
            for j in 0..n {
                let p = poly.edge_point(i, (j as f64 + 0.5) / n as f64);
                points.push([p[0], p[1], 0.0]);
                weights.push(len / n as f64);
            }
        }
        Ok(SurfaceSampling { dim: 2, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn restrict(&self, region: &dyn SurfaceRegion) -> SurfaceSampling {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (p, w) in self.points.iter().zip(&self.weights) {
            if region.contains_boundary_point(p, self.dim) {
                points.push(*p);
                weights.push(*w);
            }
        }
        SurfaceSampling {
            dim: self.dim,
            points,
            weights,
        }
    }

    /// `σ(region)`, or the total measure.
    pub fn measure(&self, region: Option<&dyn SurfaceRegion>) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| region.map_or(true, |r| r.contains_boundary_point(p, self.dim)))
            .map(|(_, w)| w)
            .sum()
    }

    /// `(∫ |v|^p dσ)^{1/p}` over `region` (or everything), or the average
    /// `(⨍ |v|^p dσ)^{1/p}`.
    pub fn lp_norm(&self, values: &[f64], region: Option<&dyn SurfaceRegion>, p: f64, average: bool) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::Precondition("one value per surface sample required".into()));
        }
        if !(p >= 1.0) {
            return Err(invalid("p", "exponent must be at least 1"));
        }
        let mut s = 0.0;
        let mut m = 0.0;
        let mut vmax: f64 = 0.0;
        for ((pt, w), v) in self.points.iter().zip(&self.weights).zip(values) {
            if region.map_or(true, |r| r.contains_boundary_point(pt, self.dim)) {
                vmax = vmax.max(v.abs());
                m += w;
            }
        }
        if m == 0.0 {
            return Err(Error::Resolution("surface region contains no samples".into()));
        }
        if vmax == 0.0 {
            return Ok(0.0);
        }
        // scale by the max to keep large p finite
        for ((pt, w), v) in self.points.iter().zip(&self.weights).zip(values) {
            if region.map_or(true, |r| r.contains_boundary_point(pt, self.dim)) {
                s += w * (v.abs() / vmax).powf(p);
            }
        }
        let total = if average { s / m } else { s };
        Ok(vmax * total.powf(1.0 / p))
    }

    /// `|f|` at every sample.
    pub fn datum_values(&self, f: &dyn VectorFunction) -> Vec<f64> {
        let m = f.components();
        self.points
            .par_iter()
            .map_init(
                || vec![C64::new(0.0, 0.0); m],
                |buf, z| {
                    f.eval(z, buf);
                    buf.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
                },
            )
            .collect()
    }
}

/// Outcome of comparing `N` with `N^h` at a boundary point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncationDefect {
    pub untruncated: f64,
    pub truncated: f64,
    pub defect: f64,
    /// `⨍_{ball} N(u) dσ`.
    pub average: f64,
    /// `defect / average`, the constant needed at this point.
    pub constant: f64,
}

/// `N(u)(z) - N^h(u)(z)` against `⨍_{ball} N(u) dσ`.
pub fn truncation_defect(
    engine: &MaximalEngine<'_>,
    z: &Point,
    spec: &ConeSpec,
    h: f64,
    ball: &dyn SurfaceRegion,
    sampling: &SurfaceSampling,
) -> Result<TruncationDefect> {
    let full = spec.untruncated();
    let (n, _) = engine.at(z, &full)?;
    let (nh, _) = engine.at(z, &full.truncated(h))?;
    let local = sampling.restrict(ball);
    let field = engine.field(&local, &full)?;
    let average = local.lp_norm(&field.values, None, 1.0, true)?;
    let defect = (n - nh).max(0.0);
    let constant = if defect == 0.0 {
        0.0
    } else if average > 0.0 {
        defect / average
    } else {
        f64::INFINITY
    };
    Ok(TruncationDefect {
        untruncated: n,
        truncated: nh,
        defect,
        average,
        constant,
    })
}

/// `(5^d / ω_d)^{1/q}`: the constant of the pointwise cone bound obtained
/// from `B(x, δ/4) ⊂ Γ_{2a}^{2h}(z)` and `δ(y) ≤ 5δ(x)/4` on that ball.
pub fn cone_bound_constant(dim: usize, q: f64) -> f64 {
    let omega = if dim == 2 {
        std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI / 3.0
    };
    (5f64.powi(dim as i32) / omega).powf(1.0 / q)
}

/// `N_a^h(u)(z) ≤ C (∫_{Γ_{2a}^{2h}(z)} |u|^q δ^{-d})^{1/q}` at one point.
#[allow(clippy::too_many_arguments)]
pub fn cone_bound_check<F: MeshField + ?Sized>(
    engine: &MaximalEngine<'_>,
    field: &F,
    mesh: &Mesh,
    domain: &dyn Domain,
    z: &Point,
    spec: &ConeSpec,
    q: f64,
) -> Result<InequalityReport> {
    if !(q >= 2.0) {
        return Err(invalid("q", "the cone bound needs q >= 2"));
    }
    if spec.height.is_none() {
        return Err(invalid("height", "the cone bound is stated for truncated cones"));
    }
    let (lhs, _) = engine.at(z, spec)?;
    let region = ConeRegion {
        domain,
        apex: *z,
        spec: spec.doubled(),
    };
    let weights = WeightContext { domain, graph: None };
    let integral = region_integral(
        mesh,
        field,
        &region,
        IntegralSpec::value(q)
            .weighted(Weight::Distance(-(domain.dim() as f64)))
            .clip(4),
        &weights,
    )?;
    let core = integral.powf(1.0 / q);
    let budget = cone_bound_constant(domain.dim(), q);
    Ok(InequalityReport::new("cone-pointwise", lhs, core, budget)
        .with("z", z[..domain.dim()].to_vec())
        .with("q", q)
        .with("aperture", spec.aperture)
        .with("height", spec.height.unwrap_or(f64::NAN))
        .with("cone_integral", integral))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AffineField, BumpDatum, ConstantField};
    use crate::integrate::Analytic;
    use crate::mesh::{graph_box_mesh, GraphMeshSpec};
    use crate::poisson::{hardy_littlewood, PoissonExtension};
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn xd() -> AffineField {
        AffineField {
            constant: c(0.0),
            slope: [c(0.0), c(1.0), c(0.0)],
        }
    }

    fn cloud(dom: &GraphDomain, lo: f64, hi: f64, a: f64, t_min: f64, t_max: f64, density: f64) -> ApproachCloud {
        let p = CloudParams {
            t_min,
            t_max,
            density,
            aperture: a,
        };
        ApproachCloud::graph(dom, [lo, lo], [hi, hi], &p, Some(TrustedBox::for_domain(dom)), None).unwrap()
    }

    #[test]
    fn ball_average_of_constants_and_x_d() {
        let dom = GraphDomain::flat(2, 4.0).unwrap();
        let one = ConstantField(vec![c(1.0)]);
        assert!((ball_l2_average(&Exact(&one), &dom, &[0.3, 0.7, 0.0]).unwrap() - 1.0).abs() < 1e-14);
        let cz = ConstantField(vec![C64::new(3.0, 4.0)]);
        assert!((ball_l2_average(&Exact(&cz), &dom, &[0.3, 0.7, 0.0]).unwrap() - 5.0).abs() < 1e-13);
        // second moment of a disk of radius 1/4 about (0, 1)
        let v = ball_l2_average(&Exact(&xd()), &dom, &[0.0, 1.0, 0.0]).unwrap();
        assert!((v - 1.015625f64.sqrt()).abs() < 1e-13, "{v}");
    }

    #[test]
    fn constant_field_has_unit_maximal_function() {
        let dom = GraphDomain::sawtooth(1.0, 0.5, 2.0, 4.0).unwrap();
        let one = ConstantField(vec![c(1.0)]);
        let a = crate::geometry::default_aperture(dom.lipschitz());
        let cl = cloud(&dom, -1.0, 1.0, a, 0.02, 2.0, 2.0);
        let eng = MaximalEngine::new(&cl, &Exact(&one));
        let s = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.05).unwrap();
        let spec = ConeSpec::default_for(dom.lipschitz());
        let f = eng.field(&s, &spec).unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let ft = eng.field(&s, &spec.truncated(0.5)).unwrap();
        assert!(ft.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn truncated_below_resolution_is_an_error() {
        let dom = GraphDomain::flat(2, 4.0).unwrap();
        let one = ConstantField(vec![c(1.0)]);
        let cl = cloud(&dom, -1.0, 1.0, 2.0, 0.1, 2.0, 2.0);
        let eng = MaximalEngine::new(&cl, &Exact(&one));
        let spec = ConeSpec::new(2.0, Some(0.01), 0.0).unwrap();
        match eng.at(&[0.0, 0.0, 0.0], &spec) {
            Err(Error::EmptyCone { minimum, .. }) => assert!(minimum > 0.01),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn monotone_in_height_and_aperture_subadditive_and_homogeneous() {
        let dom = GraphDomain::flat(2, 4.0).unwrap();
        let f1 = BumpDatum::single([0.4, 0.0, 0.0], 0.5, vec![c(1.0)]);
        let f2 = BumpDatum::single([-0.5, 0.3, 0.0], 0.4, vec![C64::new(0.0, 2.0)]);
        let u1 = PoissonExtension::new(&f1, (-0.1, 0.9)).unwrap();
        let u2 = PoissonExtension::new(&f2, (-0.9, -0.1)).unwrap();
        struct Sum<'a>(&'a dyn VectorFunction, &'a dyn VectorFunction);
        impl VectorFunction for Sum<'_> {
            fn components(&self) -> usize {
                1
            }
            fn eval(&self, x: &Point, out: &mut [C64]) {
                let mut a = [c(0.0)];
                self.0.eval(x, out);
                self.1.eval(x, &mut a);
                out[0] += a[0];
            }
        }
        let sum = Sum(&u1, &u2);
        let cl = cloud(&dom, -1.0, 1.0, 4.0, 0.05, 2.0, 2.0);
        let s = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.1).unwrap();
        let e1 = MaximalEngine::new(&cl, &Exact(&u1));
        let e2 = MaximalEngine::new(&cl, &Exact(&u2));
        let es = MaximalEngine::new(&cl, &Exact(&sum));
        let spec = ConeSpec::new(2.0, None, 0.0).unwrap();
        let wide = ConeSpec::new(4.0, None, 0.0).unwrap();
        let (n1, n2, ns) = (
            e1.field(&s, &spec).unwrap(),
            e2.field(&s, &spec).unwrap(),
            es.field(&s, &spec).unwrap(),
        );
        let nw = e1.field(&s, &wide).unwrap();
        let nh = e1.field(&s, &spec.truncated(0.3)).unwrap();
        for i in 0..s.len() {
            assert!(ns.values[i] <= n1.values[i] + n2.values[i] + 1e-12);
            assert!(nh.values[i] <= n1.values[i]);
            assert!(n1.values[i] <= nw.values[i]);
        }
        // scaling: the averages scale exactly
        let scaled: Vec<f64> = cl.averages(&Exact(&u1)).iter().map(|v| 3.0 * v).collect();
        let e3 = MaximalEngine {
            cloud: &cl,
            averages: scaled,
        };
        let n3 = e3.field(&s, &spec).unwrap();
        for i in 0..s.len() {
            assert!((n3.values[i] - 3.0 * n1.values[i]).abs() <= 1e-12 * n1.values[i]);
        }
    }

    #[test]
    fn poisson_extension_is_dominated_by_hardy_littlewood() {
        // N(Pf) ≤ C_a Mf with C_a ~ (1 + a); check with a generous constant
        let dom = GraphDomain::flat(2, 8.0).unwrap();
        let f = BumpDatum::single([0.0, 0.0, 0.0], 0.5, vec![c(1.0)]);
        let u = PoissonExtension::new(&f, (-0.5, 0.5)).unwrap();
        let cl = cloud(&dom, -2.0, 2.0, 2.0, 0.01, 4.0, 2.0);
        let eng = MaximalEngine::new(&cl, &Exact(&u));
        let s = SurfaceSampling::graph_box(&dom, [-2.0, 0.0], [2.0, 0.0], 0.04).unwrap();
        let n = eng.field(&s, &ConeSpec::new(2.0, None, 0.0).unwrap()).unwrap();
        assert_eq!(s.len(), 100);
        let mut worst: f64 = 0.0;
        for (z, v) in s.points.iter().zip(&n.values) {
            let m = hardy_littlewood(&f, (-0.5, 0.5), z[0], 1e-3, 8.0);
            worst = worst.max(v / m);
        }
        assert!(worst < 3.0, "{worst}");
        assert!(worst > 0.3);
    }

    #[test]
    fn surface_norms() {
        let flat = GraphDomain::flat(2, 4.0).unwrap();
        let s = SurfaceSampling::graph_box(&flat, [-1.0, 0.0], [1.0, 0.0], 0.1).unwrap();
        let ones = vec![1.0; s.len()];
        let ball = SurfaceBall::new([0.0, 0.0], 1.0).unwrap();
        let n = s.lp_norm(&ones, Some(&ball), 2.0, false).unwrap();
        assert!((n - 2f64.sqrt()).abs() < 1e-14);
        let c = vec![0.7; s.len()];
        assert!((s.lp_norm(&c, None, 1.0, true).unwrap() - 0.7).abs() < 1e-14);
        // arclength of a tilted line
        let m = 0.75;
        let tilt = GraphDomain::tilted(m, 2.0, 4.0).unwrap();
        let st = SurfaceSampling::graph_box(&tilt, [-0.5, 0.0], [0.5, 0.0], 0.1).unwrap();
        assert!((st.measure(None) - (1.0 + m * m as f64).sqrt()).abs() < 1e-13);
        let far = SurfaceBall::new([10.0, 0.0], 0.1).unwrap();
        assert!(matches!(s.lp_norm(&ones, Some(&far), 2.0, false), Err(Error::Resolution(_))));
    }

    #[test]
    fn cone_bound_for_x_d() {
        // u = x_d on the flat half-plane: N_a^h = h sqrt(1 + 1/64) (sup at the
        // top of the cone); cone integral over Γ_{2a}^{2h} in closed form
        let dom = Arc::new(GraphDomain::flat(2, 4.0).unwrap());
        let mesh = Arc::new(graph_box_mesh(&dom, &GraphMeshSpec::graded(&dom, 0.02, 0.5, 1.2, 0.1)).unwrap());
        let a = 2.0;
        let h = 0.5;
        let q = 4.0;
        let spec = ConeSpec::new(a, Some(h), 0.0).unwrap();
        let cl = cloud(&dom, -0.1, 0.1, a, 0.005, 1.0, 4.0);
        let u = xd();
        let eng = MaximalEngine::new(&cl, &Exact(&u));
        let rep = cone_bound_check(&eng, &Analytic(&u), &mesh, dom.as_ref(), &[0.0, 0.0, 0.0], &spec, q).unwrap();
        // the sup sits on the highest cloud layer below h
        let top = (0..).map(|k| 0.005 * 2f64.powf(k as f64 / 4.0)).take_while(|&t| t < h).last().unwrap();
        let lhs = top * (1.0 + 1.0 / 64.0f64).sqrt();
        assert!((rep.left - lhs).abs() < 1e-9 * lhs, "{} vs {lhs}", rep.left);
        // ∫_0^{2h} 2 sqrt((2a)^2 - 1) t · t^{q-2} dt
        let b = ((2.0 * a) * (2.0 * a) - 1.0f64).sqrt();
        let exact = 2.0 * b * (2.0 * h).powf(q) / q;
        let integral = rep.context["cone_integral"].as_f64().unwrap();
        assert!((integral - exact).abs() < 0.01 * exact, "{integral} vs {exact}");
        assert!(rep.pass);
    }
}
