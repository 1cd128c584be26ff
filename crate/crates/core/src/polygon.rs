//! Simple polygons in the plane and their localization into rotated graph
//! charts `{y_2 > psi(y_1)}`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{point_segment_distance, Domain, GraphDomain, Point, Profile};

/// Simple counter-clockwise polygon.
#[derive(Debug, Clone, Serialize)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let d = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| cross([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
    let (d1, d2) = (d(r, s, p), d(r, s, q));
    let (d3, d4) = (d(p, q, r), d(p, q, s));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

impl Polygon {
    /// Accepts either orientation and stores the polygon counter-clockwise.
    pub fn new(mut vertices: Vec<[f64; 2]>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(invalid("polygon", "at least three vertices required"));
        }
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(invalid("polygon", "vertices must be finite"));
        }
        let area2: f64 = (0..n).map(|i| cross(vertices[i], vertices[(i + 1) % n])).sum();
        if area2.abs() < 1e-14 {
            return Err(invalid("polygon", "degenerate (zero area)"));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        for i in 0..n {
            let (p, q) = (vertices[i], vertices[(i + 1) % n]);
            if (p[0] - q[0]).hypot(p[1] - q[1]) < 1e-14 {
                return Err(invalid("polygon", format!("repeated vertex {i}")));
            }
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(p, q, vertices[j], vertices[(j + 1) % n]) {
                    return Err(invalid("polygon", format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Polygon { vertices })
    }

    pub fn unit_square() -> Self {
        Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    /// `[0,2]^2` minus `[1,2]^2`; the reentrant corner is at `(1, 1)`.
    pub fn l_shape() -> Self {
        Polygon::new(vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
        ])
        .unwrap()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn num_edges(&self) -> usize {
        self.vertices.len()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.num_edges()).map(|i| self.edge_length(i)).sum()
    }

    /// Inward unit normal of edge `i`.
    pub fn inward_normal(&self, i: usize) -> [f64; 2] {
        let (a, b) = self.edge(i);
        let l = self.edge_length(i);
        [-(b[1] - a[1]) / l, (b[0] - a[0]) / l]
    }

    /// Interior angle at vertex `i`, in `(0, 2π)`.
    pub fn interior_angle(&self, i: usize) -> f64 {
        let n = self.vertices.len();
        let prev = self.vertices[(i + n - 1) % n];
        let v = self.vertices[i];
        let next = self.vertices[(i + 1) % n];
        let to_prev = [prev[0] - v[0], prev[1] - v[1]];
        let to_next = [next[0] - v[0], next[1] - v[1]];
        let turn = cross(to_next, to_prev).atan2(to_next[0] * to_prev[0] + to_next[1] * to_prev[1]);
        if turn <= 0.0 {
            turn + std::f64::consts::TAU
        } else {
            turn
        }
    }

    fn distance_to_edge(&self, x: &Point, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        point_segment_distance(x, &[a[0], a[1], 0.0], &[b[0], b[1], 0.0])
    }

    fn edge_distance_excluding(&self, x: &Point, skip: &[usize]) -> f64 {
        (0..self.num_edges())
            .filter(|i| !skip.contains(i))
            .map(|i| self.distance_to_edge(x, i))
            .fold(f64::INFINITY, f64::min)
    }

    fn winding_inside(&self, x: &Point) -> bool {
        let mut inside = false;
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let t = (x[1] - a[1]) / (b[1] - a[1]);
                if x[0] < a[0] + t * (b[0] - a[0]) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Boundary point at arclength fraction `s ∈ [0, 1)` of edge `i`.
    pub fn edge_point(&self, i: usize, s: f64) -> [f64; 2] {
        let (a, b) = self.edge(i);
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

impl Domain for Polygon {
    fn dim(&self) -> usize {
        2
    }

    fn contains(&self, x: &Point) -> bool {
        self.winding_inside(x) && self.edge_distance_excluding(x, &[]) > 0.0
    }

    fn distance_to_boundary(&self, x: &Point) -> Result<f64> {
        let d = self.edge_distance_excluding(x, &[]);
        if self.winding_inside(x) && d > 0.0 {
            Ok(d)
        } else {
            Err(Error::DomainMembership {
                point: *x,
                gap: if self.winding_inside(x) { 0.0 } else { -d },
            })
        }
    }

    fn on_boundary(&self, z: &Point, tol: f64) -> bool {
        self.edge_distance_excluding(z, &[]) <= tol
    }
}

/// Rigid motion `x = origin + R(angle) y` from chart to global coordinates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChartTransform {
    pub origin: [f64; 2],
    pub angle: f64,
}

impl ChartTransform {
    pub fn to_global(&self, y: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [
            self.origin[0] + c * y[0] - s * y[1],
            self.origin[1] + s * y[0] + c * y[1],
        ]
    }

    pub fn to_local(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChartKind {
    Vertex(usize),
    Edge(usize),
}

/// A rotated graph chart: inside the ball `B(center, radius)` the polygon
/// coincides with the chart's graph domain.
#[derive(Debug, Clone, Serialize)]
pub struct Chart {
    pub kind: ChartKind,
    pub transform: ChartTransform,
    pub domain: GraphDomain,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Chart {
    pub fn lipschitz(&self) -> f64 {
        self.domain.lipschitz()
    }

    /// Whether the global point `x` lies in the chart ball.
    pub fn covers(&self, x: [f64; 2]) -> bool {
        (x[0] - self.center[0]).hypot(x[1] - self.center[1]) < self.radius
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalizeOptions {
    /// Fraction of the clearance used as the vertex chart radius.
    pub vertex_fraction: f64,
    /// Charts smaller than this are rejected.
    pub min_radius: f64,
    /// Charts steeper than this are rejected.
    pub max_slope: f64,
    /// Boundary samples per edge for the cover check.
    pub samples_per_edge: usize,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions {
            vertex_fraction: 0.4,
            min_radius: 0.0,
            max_slope: 10.0,
            samples_per_edge: 400,
        }
    }
}

fn local_graph(points: &[[f64; 2]], radius: f64) -> Result<GraphDomain> {
    // points are (lateral, height) in chart coordinates, sorted by lateral
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let values: Vec<f64> = points.iter().map(|p| p[1]).collect();
    GraphDomain::new(Profile::Knots { xs, values }, radius)
}

/// Covers the boundary of `polygon` by vertex charts (bisector frames, slope
/// `|cot(θ/2)|`) and edge charts (flat), and verifies the cover on boundary
/// samples.
pub fn localize_polygon(polygon: &Polygon, opts: &LocalizeOptions) -> Result<Vec<Chart>> {
    let n = polygon.num_edges();
    let mut charts = Vec::new();
    let mut vertex_radius = vec![0.0; n];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let v = polygon.vertices()[i];
        let vp = [v[0], v[1], 0.0];
        let clearance = polygon
            .edge_distance_excluding(&vp, &[prev, i])
            .min(polygon.edge_length(prev))
            .min(polygon.edge_length(i));
        let radius = opts.vertex_fraction * clearance;
        if radius < opts.min_radius || radius <= 0.0 {
            return Err(Error::Localization {
                vertex: i,
                reason: format!(
                    "clearance {clearance:.3e} leaves a chart of radius {radius:.3e} below the requested scale {:.3e}",
                    opts.min_radius
                ),
            });
        }
        let theta = polygon.interior_angle(i);
        let slope = (1.0 / (theta / 2.0).tan()).abs();
        if slope > opts.max_slope {
            return Err(Error::Localization {
                vertex: i,
                reason: format!(
                    "interior angle {:.2} deg gives slope {slope:.3} > {}",
                    theta.to_degrees(),
                    opts.max_slope
                ),
            });
        }
        let (ni, np) = (polygon.inward_normal(i), polygon.inward_normal(prev));
        let up = [ni[0] + np[0], ni[1] + np[1]];
        let len = up[0].hypot(up[1]);
        // for a straight angle the two normals agree; otherwise they never cancel
        let up = [up[0] / len, up[1] / len];
        // local y_2 axis is `up`; y_1 = R(-angle) with angle = atan2(up) - π/2
        let transform = ChartTransform {
            origin: v,
            angle: up[1].atan2(up[0]) - std::f64::consts::FRAC_PI_2,
        };
        let a = transform.to_local(polygon.edge_point(prev, 0.0));
        let b = transform.to_local(polygon.vertices()[(i + 1) % n]);
        if a[0] * b[0] >= 0.0 {
            return Err(Error::Localization {
                vertex: i,
                reason: "adjacent edges are not graphs over the bisector frame".into(),
            });
        }
        let mut pts = [a, [0.0, 0.0], b];
        pts.sort_by(|p, q| p[0].total_cmp(&q[0]));
        let domain = local_graph(&pts, radius).map_err(|e| Error::Localization {
            vertex: i,
            reason: e.to_string(),
        })?;
        vertex_radius[i] = radius;
        charts.push(Chart {
            kind: ChartKind::Vertex(i),
            transform,
            domain,
            center: v,
            radius,
        });
    }
    // flat charts over what the vertex balls leave uncovered
    for i in 0..n {
        let len = polygon.edge_length(i);
        let s0 = 0.9 * vertex_radius[i] / len;
        let s1 = 1.0 - 0.9 * vertex_radius[(i + 1) % n] / len;
        if s1 <= s0 {
            continue;
        }
        let mut pieces = 1usize;
        'split: loop {
            let mut trial = Vec::new();
            for k in 0..pieces {
                let lo = s0 + (s1 - s0) * k as f64 / pieces as f64;
                let hi = s0 + (s1 - s0) * (k + 1) as f64 / pieces as f64;
                let mid = polygon.edge_point(i, (lo + hi) / 2.0);
                let radius = 0.6 * (hi - lo) * len;
                let clearance = polygon.edge_distance_excluding(&[mid[0], mid[1], 0.0], &[i]);
                if radius >= clearance {
                    pieces *= 2;
                    if pieces > 1 << 12 {
                        return Err(Error::Localization {
                            vertex: i,
                            reason: format!("edge {i} cannot be covered by flat charts"),
                        });
                    }
                    continue 'split;
                }
                let nrm = polygon.inward_normal(i);
                let transform = ChartTransform {
                    origin: mid,
                    angle: nrm[1].atan2(nrm[0]) - std::f64::consts::FRAC_PI_2,
                };
                let ends = [
                    transform.to_local(polygon.edge_point(i, 0.0)),
                    transform.to_local(polygon.edge_point(i, 1.0)),
                ];
                let mut pts = [ends[0], [0.0, 0.0], ends[1]];
                pts.sort_by(|p, q| p[0].total_cmp(&q[0]));
                let domain = local_graph(&pts, radius).map_err(|e| Error::Localization {
                    vertex: i,
                    reason: e.to_string(),
                })?;
                trial.push(Chart {
                    kind: ChartKind::Edge(i),
                    transform,
                    domain,
                    center: mid,
                    radius,
                });
            }
            charts.extend(trial);
            break;
        }
    }
    verify_cover(polygon, &charts, opts.samples_per_edge)?;
    Ok(charts)
}

/// Every boundary sample must lie in some chart ball, on that chart's graph.
pub fn verify_cover(polygon: &Polygon, charts: &[Chart], samples_per_edge: usize) -> Result<()> {
    for i in 0..polygon.num_edges() {
        for k in 0..samples_per_edge {
            let s = k as f64 / samples_per_edge as f64;
            let x = polygon.edge_point(i, s);
            let ok = charts.iter().any(|c| {
                c.covers(x) && {
                    let y = c.transform.to_local(x);
                    (y[1] - c.domain.psi(&[y[0], 0.0])).abs() < 1e-9 * (1.0 + c.radius)
                }
            });
            if !ok {
                return Err(Error::Localization {
                    vertex: i,
                    reason: format!("boundary point {x:?} on edge {i} is not covered"),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_distance_and_membership() {
        let sq = Polygon::unit_square();
        assert!((sq.distance_to_boundary(&[0.5, 0.25, 0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(sq.distance_to_boundary(&[1.5, 0.5, 0.0]).is_err());
        assert!(sq.on_boundary(&[1.0, 0.3, 0.0], 1e-12));
        assert!((sq.perimeter() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn orientation_is_normalized_and_self_intersections_rejected() {
        let cw = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        for i in 0..4 {
            let m = cw.edge_point(i, 0.5);
            let nrm = cw.inward_normal(i);
            assert!(cw.contains(&[m[0] + 0.1 * nrm[0], m[1] + 0.1 * nrm[1], 0.0]));
        }
        let bowtie = Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(bowtie.is_err());
    }

    #[test]
    fn interior_angles() {
        let l = Polygon::l_shape();
        let deg: Vec<f64> = (0..6).map(|i| l.interior_angle(i).to_degrees().round()).collect();
        assert_eq!(deg, vec![90.0, 90.0, 90.0, 270.0, 90.0, 90.0]);
    }

    // chart validity: inside each chart ball, polygon membership equals
    // membership in the rotated graph domain
    fn check_charts(poly: &Polygon, charts: &[Chart]) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in charts {
            for _ in 0..2000 {
                let t = rng.gen::<f64>() * std::f64::consts::TAU;
                let rho = c.radius * rng.gen::<f64>().sqrt();
                let x = [c.center[0] + rho * t.cos(), c.center[1] + rho * t.sin()];
                let y = c.transform.to_local(x);
                let gap = y[1] - c.domain.psi(&[y[0], 0.0]);
                if gap.abs() < 1e-9 {
                    continue;
                }
                assert_eq!(poly.contains(&[x[0], x[1], 0.0]), gap > 0.0, "{:?} at {x:?}", c.kind);
            }
        }
    }

    #[test]
    fn unit_square_has_eight_charts() {
        let sq = Polygon::unit_square();
        let charts = localize_polygon(&sq, &LocalizeOptions::default()).unwrap();
        assert_eq!(charts.len(), 8);
        assert!(charts.iter().all(|c| c.lipschitz() <= 1.0 + 1e-12));
        check_charts(&sq, &charts);
        for c in &charts {
            if let ChartKind::Edge(_) = c.kind {
                assert!(c.lipschitz() < 1e-12);
            }
        }
    }

    #[test]
    fn l_shape_reentrant_corner() {
        let l = Polygon::l_shape();
        let charts = localize_polygon(&l, &LocalizeOptions::default()).unwrap();
        let corner = charts.iter().find(|c| c.kind == ChartKind::Vertex(3)).unwrap();
        assert!((corner.lipschitz() - 1.0).abs() < 1e-12);
        assert!(charts.iter().all(|c| c.lipschitz() <= 1.0 + 1e-12));
        check_charts(&l, &charts);
    }

    #[test]
    fn sharp_vertex_is_named() {
        let spike = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.05]]).unwrap();
        let opts = LocalizeOptions {
            max_slope: 5.0,
            ..Default::default()
        };
        match localize_polygon(&spike, &opts) {
            Err(Error::Localization { vertex, .. }) => assert_eq!(vertex, 1),
            other => panic!("{other:?}"),
        }
        let small = LocalizeOptions {
            min_radius: 0.2,
            max_slope: 100.0,
            ..Default::default()
        };
        assert!(matches!(
            localize_polygon(&spike, &small),
            Err(Error::Localization { .. })
        ));
    }

    #[test]
    fn chart_transform_round_trip() {
        let t = ChartTransform {
            origin: [0.3, -1.0],
            angle: 0.7,
        };
        let x = [2.0, 5.0];
        let y = t.to_global(t.to_local(x));
        assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
    }
}
