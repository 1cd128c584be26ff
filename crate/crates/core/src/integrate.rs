//! Volume integrals `∫_region |u|^e w` or `∫_region |∇u|^e w` over meshes,
//! with clipping of simplices that straddle the region boundary.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::AnalyticField;
use crate::geometry::{Domain, GraphDomain, Point, Region};
use crate::mesh::Mesh;
use crate::quadrature::{simplex_rule, SimplexRule};
use crate::solver::Solution;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A field that can be evaluated inside mesh simplices.
pub trait MeshField: Sync {
    fn components(&self) -> usize;
    fn value(&self, k: usize, bary: &[f64; 4], x: &Point, out: &mut [C64]);
    fn gradient(&self, k: usize, bary: &[f64; 4], x: &Point, out: &mut [[C64; 3]]);
}

impl MeshField for Solution {
    fn components(&self) -> usize {
        Solution::components(self)
    }

    fn value(&self, k: usize, bary: &[f64; 4], _x: &Point, out: &mut [C64]) {
        self.value_in(k, bary, out)
    }

    fn gradient(&self, k: usize, _bary: &[f64; 4], _x: &Point, out: &mut [[C64; 3]]) {
        Solution::gradient(self, k, out)
    }
}

/// Closed-form field integrated on a quadrature mesh.
pub struct Analytic<'a>(pub &'a dyn AnalyticField);

impl MeshField for Analytic<'_> {
    fn components(&self) -> usize {
        self.0.components()
    }

    fn value(&self, _k: usize, _bary: &[f64; 4], x: &Point, out: &mut [C64]) {
        self.0.eval(x, out)
    }

    fn gradient(&self, _k: usize, _bary: &[f64; 4], x: &Point, out: &mut [[C64; 3]]) {
        self.0.gradient(x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    One,
    /// `δ(x)^s`.
    Distance(f64),
    /// `δ̃(x)^s = (x_d - psi(x'))^s`.
    Gap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `|u|` (Euclidean norm over components).
    Value,
    /// `|∇u|` (Frobenius norm).
    Gradient,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegralSpec {
    pub quantity: Quantity,
    pub exponent: f64,
    pub weight: Weight,
    /// Subdivision depth for simplices cut by the region boundary.
    pub clip_depth: usize,
}

impl IntegralSpec {
    pub fn value(exponent: f64) -> Self {
        IntegralSpec {
            quantity: Quantity::Value,
            exponent,
            weight: Weight::One,
            clip_depth: 3,
        }
    }

    pub fn gradient(exponent: f64) -> Self {
        IntegralSpec {
            quantity: Quantity::Gradient,
            ..Self::value(exponent)
        }
    }

    pub fn weighted(self, weight: Weight) -> Self {
        IntegralSpec { weight, ..self }
    }

    pub fn clip(self, depth: usize) -> Self {
        IntegralSpec {
            clip_depth: depth,
            ..self
        }
    }
}

/// Supplies `δ` and `δ̃` for the weights.
pub struct WeightContext<'a> {
    pub domain: &'a dyn Domain,
    pub graph: Option<&'a GraphDomain>,
}

impl<'a> WeightContext<'a> {
    pub fn graph(domain: &'a GraphDomain) -> Self {
        WeightContext {
            domain,
            graph: Some(domain),
        }
    }

    fn weight(&self, w: Weight, x: &Point) -> Result<f64> {
        match w {
            Weight::One => Ok(1.0),
            Weight::Distance(s) => {
                let d = self.domain.distance_to_boundary(x)?;
                if d < 1e-14 && s < 0.0 {
                    return Err(Error::BoundaryNode { point: *x, delta: d });
                }
                Ok(d.powf(s))
            }
            Weight::Gap(s) => {
                let g = self
                    .graph
                    .ok_or_else(|| Error::Precondition("gap weight needs a graph domain".into()))?
                    .vertical_gap(x)?;
                if g < 1e-14 && s < 0.0 {
                    return Err(Error::BoundaryNode { point: *x, delta: g });
                }
                Ok(g.powf(s))
            }
        }
    }
}

/// Coverage of a simplex by a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coverage {
    Inside,
    Outside,
    Mixed,
}

fn classify(region: &dyn Region, dim: usize, verts: &[Point]) -> Coverage {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in verts {
        for c in 0..dim {
            lo[c] = lo[c].min(v[c]);
            hi[c] = hi[c].max(v[c]);
        }
    }
    if let Some((rlo, rhi)) = region.bounds() {
        if (0..dim).any(|c| hi[c] < rlo[c] || lo[c] > rhi[c]) {
            return Coverage::Outside;
        }
    }
    if let Some(r) = region.ball() {
        let dist = point_simplex_distance(dim, &r.0, verts);
        if dist >= r.1 {
            return Coverage::Outside;
        }
    }
    let inside = verts.iter().filter(|v| region.contains(v)).count();
    if inside == verts.len() && region.is_convex() {
        return Coverage::Inside;
    }
    if inside == 0 && region.ball().is_none() {
        let mut c = [0.0; 3];
        for v in verts {
            for a in 0..3 {
                c[a] += v[a] / verts.len() as f64;
            }
        }
        if !region.contains(&c) {
            return Coverage::Outside;
        }
    }
    Coverage::Mixed
}

/// Distance from `p` to the simplex with vertices `verts`.
pub fn point_simplex_distance(dim: usize, p: &Point, verts: &[Point]) -> f64 {
    use crate::geometry::{point_segment_distance, point_triangle_distance};
    if dim == 2 {
        let (a, b, c) = (verts[0], verts[1], verts[2]);
        let cross = |o: &Point, u: &Point, v: &Point| (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0]);
        let s = cross(&a, &b, &c).signum();
        if cross(&a, &b, p) * s >= 0.0 && cross(&b, &c, p) * s >= 0.0 && cross(&c, &a, p) * s >= 0.0 {
            return 0.0;
        }
        point_segment_distance(p, &a, &b)
            .min(point_segment_distance(p, &b, &c))
            .min(point_segment_distance(p, &c, &a))
    } else {
        let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        let orient = |a: &Point, b: &Point, c: &Point, d: &Point| {
            let u = crate::geometry::sub(b, a);
            let v = crate::geometry::sub(c, a);
            let w = crate::geometry::sub(d, a);
            u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])
        };
        let inside = faces.iter().enumerate().all(|(k, f)| {
            let opp = verts[3 - k];
            let s = orient(&verts[f[0]], &verts[f[1]], &verts[f[2]], &opp);
            orient(&verts[f[0]], &verts[f[1]], &verts[f[2]], p) * s >= 0.0
        });
        if inside {
            return 0.0;
        }
        faces
            .iter()
            .map(|f| point_triangle_distance(p, &verts[f[0]], &verts[f[1]], &verts[f[2]]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Children of a simplex given in parent barycentric coordinates (uniform
/// red refinement: 4 triangles or 8 tetrahedra of equal volume).
fn refine(dim: usize, s: &[[f64; 4]]) -> Vec<Vec<[f64; 4]>> {
    let mid = |a: &[f64; 4], b: &[f64; 4]| {
        let mut m = [0.0; 4];
        for i in 0..4 {
            m[i] = 0.5 * (a[i] + b[i]);
        }
        m
    };
    if dim == 2 {
        let (a, b, c) = (s[0], s[1], s[2]);
        let (ab, bc, ca) = (mid(&a, &b), mid(&b, &c), mid(&c, &a));
        vec![
            vec![a, ab, ca],
            vec![ab, b, bc],
            vec![ca, bc, c],
            vec![ab, bc, ca],
        ]
    } else {
        let (x0, x1, x2, x3) = (s[0], s[1], s[2], s[3]);
        let (x01, x02, x03) = (mid(&x0, &x1), mid(&x0, &x2), mid(&x0, &x3));
        let (x12, x13, x23) = (mid(&x1, &x2), mid(&x1, &x3), mid(&x2, &x3));
        vec![
            vec![x0, x01, x02, x03],
            vec![x01, x1, x12, x13],
            vec![x02, x12, x2, x23],
            vec![x03, x13, x23, x3],
            vec![x01, x02, x03, x13],
            vec![x01, x02, x12, x13],
            vec![x02, x03, x13, x23],
            vec![x02, x12, x13, x23],
        ]
    }
}

struct Integrator<'a, F: MeshField + ?Sized> {
    mesh: &'a Mesh,
    field: &'a F,
    region: &'a dyn Region,
    spec: IntegralSpec,
    weights: &'a WeightContext<'a>,
    rule: SimplexRule,
}

impl<F: MeshField + ?Sized> Integrator<'_, F> {
    fn integrand(&self, k: usize, bary: &[f64; 4], x: &Point, vals: &mut [C64], grads: &mut [[C64; 3]]) -> Result<f64> {
        let mag2 = match self.spec.quantity {
            Quantity::Value => {
                self.field.value(k, bary, x, vals);
                vals.iter().map(|v| v.norm_sqr()).sum::<f64>()
            }
            Quantity::Gradient => {
                self.field.gradient(k, bary, x, grads);
                grads.iter().flat_map(|g| g.iter()).map(|v| v.norm_sqr()).sum::<f64>()
            }
        };
        let e = self.spec.exponent;
        let f = if e == 2.0 {
            mag2
        } else if mag2 == 0.0 {
            0.0
        } else {
            mag2.powf(0.5 * e)
        };
        if f == 0.0 {
            return Ok(0.0);
        }
        Ok(f * self.weights.weight(self.spec.weight, x)?)
    }

    fn piece(&self, k: usize, sub: &[[f64; 4]], vol: f64, depth: usize, clip: bool) -> Result<f64> {
        let dim = self.mesh.dim();
        let corners: Vec<Point> = sub.iter().map(|b| self.mesh.point_at(k, b)).collect();
        let cov = if clip {
            classify(self.region, dim, &corners)
        } else {
            Coverage::Inside
        };
        match cov {
            Coverage::Outside => Ok(0.0),
            Coverage::Mixed if depth < self.spec.clip_depth => {
                let children = refine(dim, sub);
                let cv = vol / children.len() as f64;
                let mut s = 0.0;
                for c in children {
                    s += self.piece(k, &c, cv, depth + 1, true)?;
                }
                Ok(s)
            }
            _ => {
                let m = self.field.components();
                let mut vals = vec![ZERO; m];
                let mut grads = vec![[ZERO; 3]; m];
                let mut s = 0.0;
                for (q, &w) in self.rule.points.iter().zip(&self.rule.weights) {
                    let mut b = [0.0; 4];
                    for (i, corner) in sub.iter().enumerate() {
                        for j in 0..4 {
                            b[j] += q[i] * corner[j];
                        }
                    }
                    let x = self.mesh.point_at(k, &b);
                    if cov == Coverage::Mixed && !self.region.contains(&x) {
                        continue;
                    }
                    s += w * self.integrand(k, &b, &x, &mut vals, &mut grads)?;
                }
                Ok(s * vol)
            }
        }
    }
}

/// `∫_{region ∩ mesh} quantity^exponent · weight` with the fixed volume rule.
pub fn region_integral<F: MeshField + ?Sized>(
    mesh: &Mesh,
    field: &F,
    region: &dyn Region,
    spec: IntegralSpec,
    weights: &WeightContext<'_>,
) -> Result<f64> {
    let dim = mesh.dim();
    let integ = Integrator {
        mesh,
        field,
        region,
        spec,
        weights,
        rule: simplex_rule(dim),
    };
    let mut root = vec![[0.0; 4]; dim + 1];
    for (i, r) in root.iter_mut().enumerate() {
        r[i] = 1.0;
    }
    let parts: Result<Vec<f64>> = (0..mesh.num_simplices())
        .into_par_iter()
        .with_min_len(64)
        .map(|k| integ.piece(k, &root, mesh.geometry(k).volume, 0, true))
        .collect();
    let v: f64 = parts?.iter().sum();
    if !v.is_finite() {
        return Err(Error::Precondition("integral is not finite".into()));
    }
    Ok(v)
}

/// Volume of `region ∩ mesh`.
pub fn region_volume(mesh: &Mesh, region: &dyn Region, weights: &WeightContext<'_>) -> Result<f64> {
    let one = crate::fields::ConstantField(vec![C64::new(1.0, 0.0)]);
    region_integral(mesh, &Analytic(&one), region, IntegralSpec::value(1.0), weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantField, GapPower};
    use crate::geometry::{carleson_box_mesh_region, BallRegion, Everywhere};
    use crate::mesh::{graph_box_mesh, GraphMeshSpec};

    #[test]
    fn carleson_box_area_and_gap_weighted_integral() {
        let dom = GraphDomain::flat(2, 2.0).unwrap();
        let mesh = graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, 0.1)).unwrap();
        let d1 = carleson_box_mesh_region(&dom, 1.0, 2.0).unwrap();
        let w = WeightContext::graph(&dom);
        let one = ConstantField(vec![C64::new(1.0, 0.0)]);
        let area = region_integral(&mesh, &Analytic(&one), &d1, IntegralSpec::value(1.0), &w).unwrap();
        assert!((area - 4.0).abs() < 1e-12);
        let xd = GapPower {
            domain: &dom,
            exponent: 1.0,
        };
        let v = region_integral(&mesh, &Analytic(&xd), &d1, IntegralSpec::value(2.0).weighted(Weight::Gap(-2.0)), &w).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn half_disk_second_moment() {
        // ∫_{B(0,2r) ∩ Ω} x_d^2 = 2π r^4
        let dom = GraphDomain::flat(2, 2.0).unwrap();
        let mesh = graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, 0.05)).unwrap();
        let r = 0.5;
        let ball = BallRegion {
            center: [0.0; 3],
            radius: 2.0 * r,
            dim: 2,
        };
        let xd = GapPower {
            domain: &dom,
            exponent: 1.0,
        };
        let v = region_integral(&mesh, &Analytic(&xd), &ball, IntegralSpec::value(2.0).clip(4), &WeightContext::graph(&dom)).unwrap();
        let exact = 2.0 * std::f64::consts::PI * r.powi(4);
        assert!((v - exact).abs() < 2e-3 * exact, "{v} vs {exact}");
    }

    #[test]
    fn tetra_refinement_preserves_volume_and_whole_domain() {
        let dom = GraphDomain::flat(3, 1.0).unwrap();
        let mesh = graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, 0.5)).unwrap();
        let ball = BallRegion {
            center: [0.1, -0.2, 0.0],
            radius: 0.6,
            dim: 3,
        };
        let w = WeightContext::graph(&dom);
        let v = region_volume(&mesh, &ball, &w).unwrap();
        let exact = 2.0 / 3.0 * std::f64::consts::PI * 0.6f64.powi(3);
        assert!((v - exact).abs() < 0.02 * exact, "{v} vs {exact}");
        let all = region_volume(&mesh, &Everywhere, &w).unwrap();
        assert!((all - 4.0).abs() < 1e-12);
    }
}
