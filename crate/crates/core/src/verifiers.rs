//! Checks of the boundary Cacciopoli, Hardy, Sobolev and reverse Hölder
//! inequalities on computed or closed-form fields.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{carleson_box_mesh_region, BallRegion, CarlesonBox, GraphDomain, Point, SurfaceBall};
use crate::integrate::{region_integral, region_volume, IntegralSpec, MeshField, Weight, WeightContext};
use crate::maximal::{Sampled, SurfaceSampling};
use crate::mesh::{Mesh, VertexKind};
use crate::report::{stability, InequalityReport, VACUOUS};

/// Trace values below this count as zero.
pub const TRACE_TOL: f64 = 1e-10;

/// Boundary vertices of `mesh` inside `patch` where `|u| > TRACE_TOL`.
pub fn trace_violations(mesh: &Mesh, trace: &dyn Sampled, patch: impl Fn(&Point) -> bool) -> Vec<Point> {
    let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); trace.components()];
    let mut bad = Vec::new();
    for (v, x) in mesh.vertices().iter().enumerate() {
        if mesh.vertex_kind(v) != VertexKind::Graph || !patch(x) {
            continue;
        }
        if !trace.sample(x, &mut buf) {
            continue;
        }
        let n = buf.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > TRACE_TOL {
            bad.push(*x);
        }
    }
    bad
}

fn require_vanishing(mesh: &Mesh, trace: &dyn Sampled, patch: impl Fn(&Point) -> bool) -> Result<()> {
    let bad = trace_violations(mesh, trace, patch);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::TraceViolation { points: bad })
    }
}

fn lateral_within(dim: usize, center: &[f64; 2], r: f64) -> impl Fn(&Point) -> bool {
    let c = *center;
    move |x: &Point| (0..dim - 1).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>() < r * r
}

/// `r² ∫_{B(x₀,r)∩Ω} |∇u|² ≤ κ ∫_{B(x₀,2r)∩Ω} |u|²` for `u` vanishing on
/// `B(x₀, 2r) ∩ ∂Ω`.
#[allow(clippy::too_many_arguments)]
pub fn cacciopoli_check<F: MeshField + ?Sized>(
    mesh: &Mesh,
    field: &F,
    trace: &dyn Sampled,
    domain: &GraphDomain,
    x0: &Point,
    r: f64,
    kappa: f64,
) -> Result<InequalityReport> {
    if !(r > 0.0) {
        return Err(invalid("r", "scale must be positive"));
    }
    let dim = domain.dim();
    let big = BallRegion {
        center: *x0,
        radius: 2.0 * r,
        dim,
    };
    let x0c = *x0;
    require_vanishing(mesh, trace, |x| crate::geometry::dist(x, &x0c) < 2.0 * r)?;
    let w = WeightContext::graph(domain);
    let small = BallRegion { radius: r, ..big };
    let grad = region_integral(mesh, field, &small, IntegralSpec::gradient(2.0), &w)?;
    let mass = region_integral(mesh, field, &big, IntegralSpec::value(2.0), &w)?;
    Ok(InequalityReport::new("cacciopoli", r * r * grad, mass, kappa)
        .with("r", r)
        .with("x0", x0[..dim].to_vec()))
}

/// `∫_{D_r} |u|² / δ̃² ≤ 4 ∫_{D_r} |∇u|²` for `u` vanishing on `Δ_r`;
/// the budget is `4 (1 + tol)`.
pub fn hardy_check<F: MeshField + ?Sized>(
    mesh: &Mesh,
    field: &F,
    trace: &dyn Sampled,
    domain: &GraphDomain,
    r: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let dim = domain.dim();
    let region = carleson_box_mesh_region(domain, r, crate::geometry::default_aperture(domain.lipschitz()))?;
    require_vanishing(mesh, trace, lateral_within(dim, &[0.0, 0.0], r))?;
    let w = WeightContext::graph(domain);
    let left = region_integral(mesh, field, &region, IntegralSpec::value(2.0).weighted(Weight::Gap(-2.0)), &w)?;
    let right = region_integral(mesh, field, &region, IntegralSpec::gradient(2.0), &w)?;
    Ok(InequalityReport::new("hardy", left, right, 4.0 * (1.0 + tol))
        .with("r", r)
        .with("tol", tol))
}

/// `‖u‖_{L^p(D_{5ar})} ≤ C |D|^{1/p - 1/2 + 1/d} ‖∇u‖_{L²(D_{5ar})}`; the
/// volume factor makes the ratio scale-free for every `p`, and is `1` at
/// the critical exponent `2d/(d-2)`.
#[allow(clippy::too_many_arguments)]
pub fn sobolev_check<F: MeshField + ?Sized>(
    mesh: &Mesh,
    field: &F,
    trace: &dyn Sampled,
    domain: &GraphDomain,
    r: f64,
    aperture: f64,
    exponent: f64,
    budget: f64,
) -> Result<InequalityReport> {
    let dim = domain.dim();
    if dim == 3 && (exponent - 6.0).abs() > 1e-12 {
        return Err(invalid("exponent", "d = 3 uses the critical exponent 2(q-1) = 6"));
    }
    if !(exponent >= 2.0) {
        return Err(invalid("exponent", "must be at least 2"));
    }
    let radius = 5.0 * aperture * r;
    let region = carleson_box_mesh_region(domain, radius, aperture)?;
    require_vanishing(mesh, trace, lateral_within(dim, &[0.0, 0.0], radius))?;
    let w = WeightContext::graph(domain);
    let lp = region_integral(mesh, field, &region, IntegralSpec::value(exponent), &w)?.powf(1.0 / exponent);
    let grad = region_integral(mesh, field, &region, IntegralSpec::gradient(2.0), &w)?.sqrt();
    let vol = region_volume(mesh, &region, &w)?;
    let factor = vol.powf(1.0 / exponent - 0.5 + 1.0 / dim as f64);
    Ok(InequalityReport::new("sobolev", lp, grad * factor, budget)
        .with("r", r)
        .with("exponent", exponent)
        .with("volume", vol))
}

/// Sobolev ratios at two scales must agree within `1.5`.
pub fn sobolev_scale_pair(small: &InequalityReport, large: &InequalityReport) -> InequalityReport {
    stability("sobolev-scale", &[small.clone(), large.clone()], 1.5)
}

/// Sampled `N(u)` on a surface region, used by the reverse Hölder checks.
#[derive(Debug, Clone)]
pub struct BoundaryField<'a> {
    pub sampling: &'a SurfaceSampling,
    pub values: &'a [f64],
}

/// Minimum number of samples in `Δ_r` for a reverse Hölder average.
pub const MIN_SAMPLES: usize = 32;

/// `(⨍_{Δ_r} N^q)^{1/q} ≤ C (⨍_{Δ_{2r}} N^s)^{1/s}` with `s = lower`
/// (`1`, or `2` for the intermediate form).
pub fn reverse_holder_check(
    n: &BoundaryField<'_>,
    z: [f64; 2],
    r: f64,
    q: f64,
    lower: f64,
    budget: f64,
) -> Result<InequalityReport> {
    if !(q > lower) {
        return Err(invalid("q", "must exceed the lower exponent"));
    }
    let inner = SurfaceBall::new(z, r)?;
    let outer = SurfaceBall::new(z, 2.0 * r)?;
    let count = n.sampling.restrict(&inner).len();
    if count < MIN_SAMPLES {
        return Err(Error::Resolution(format!(
            "{count} boundary samples in the surface ball of radius {r}, need {MIN_SAMPLES}"
        )));
    }
    let left = n.sampling.lp_norm(n.values, Some(&inner), q, true)?;
    let right = n.sampling.lp_norm(n.values, Some(&outer), lower, true)?;
    Ok(InequalityReport::new("reverse-holder", left, right, budget)
        .with("r", r)
        .with("q", q)
        .with("lower", lower)
        .with("samples", count))
}

/// Reverse Hölder at `R/8, R/4, R/2`, plus a stability report (factor 2).
pub fn reverse_holder_scales(
    n: &BoundaryField<'_>,
    z: [f64; 2],
    big_r: f64,
    q: f64,
    lower: f64,
    budget: f64,
) -> Result<(Vec<InequalityReport>, InequalityReport)> {
    let reports = [8.0, 4.0, 2.0]
        .iter()
        .map(|&k| reverse_holder_check(n, z, big_r / k, q, lower, budget))
        .collect::<Result<Vec<_>>>()?;
    let stab = stability("reverse-holder-scales", &reports, 2.0).with("q", q);
    Ok((reports, stab))
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfImprovement {
    /// Largest exponent up to which every scale-stability check passes.
    pub q_bar: f64,
    /// `q_bar` minus the base exponent.
    pub epsilon: f64,
    pub vacuous: bool,
    pub reports: Vec<InequalityReport>,
}

/// Runs the scale check for each exponent of the increasing grid `qs`,
/// whose first entry is the base exponent.
pub fn self_improve_scan(
    n: &BoundaryField<'_>,
    z: [f64; 2],
    big_r: f64,
    qs: &[f64],
    budget: f64,
) -> Result<SelfImprovement> {
    if qs.is_empty() || qs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("q_grid", "grid not increasing"));
    }
    let mut reports = Vec::new();
    let mut q_bar = qs[0];
    let mut open = true;
    let mut vacuous = true;
    for &q in qs {
        let (rs, stab) = reverse_holder_scales(n, z, big_r, q, 1.0, budget)?;
        let ok = stab.pass && rs.iter().all(|r| r.pass);
        vacuous &= stab.vacuous;
        if open && ok {
            q_bar = q;
        } else {
            open = false;
        }
        reports.extend(rs);
        reports.push(stab);
    }
    Ok(SelfImprovement {
        q_bar,
        epsilon: q_bar - qs[0],
        vacuous,
        reports,
    })
}

/// `true` when the report's right side is numerically zero.
pub fn degenerate(r: &InequalityReport) -> bool {
    r.right.abs() <= VACUOUS
}

/// The Carleson box `D_r` of a domain.
pub fn carleson_box(domain: &GraphDomain, r: f64) -> Result<CarlesonBox> {
    carleson_box_mesh_region(domain, r, crate::geometry::default_aperture(domain.lipschitz()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AffineField, BumpDatum, ConstantField, GapPower};
    use crate::integrate::Analytic;
    use crate::maximal::Exact;
    use crate::mesh::{graph_box_mesh, GraphMeshSpec};
    use num_complex::Complex64 as C64;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn half_disk_cacciopoli_for_x_d() {
        let dom = GraphDomain::flat(2, 2.0).unwrap();
        let mesh = graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, 0.05)).unwrap();
        let u = AffineField {
            constant: c(0.0),
            slope: [c(0.0), c(1.0), c(0.0)],
        };
        let rep = cacciopoli_check(&mesh, &Analytic(&u), &Exact(&u), &dom, &[0.0, 0.0, 0.0], 0.5, 1.0).unwrap();
        assert!((rep.ratio - 0.25).abs() < 0.01, "{}", rep.ratio);
        let zero = ConstantField(vec![c(0.0)]);
        let rep = cacciopoli_check(&mesh, &Analytic(&zero), &Exact(&zero), &dom, &[0.0, 0.0, 0.0], 0.5, 1.0).unwrap();
        assert!(rep.vacuous && rep.pass);
        let one = ConstantField(vec![c(1.0)]);
        assert!(matches!(
            cacciopoli_check(&mesh, &Analytic(&one), &Exact(&one), &dom, &[0.0, 0.0, 0.0], 0.5, 1.0),
            Err(Error::TraceViolation { .. })
        ));
    }

    #[test]
    fn hardy_sharp_family() {
        let dom = GraphDomain::flat(2, 8.0).unwrap();
        let mesh = graph_box_mesh(&dom, &GraphMeshSpec::graded(&dom, 0.02, 1.2, 1.3, 0.5)).unwrap();
        for s in [0.51, 0.6, 0.75, 1.0] {
            let u = GapPower {
                domain: &dom,
                exponent: s,
            };
            let rep = hardy_check(&mesh, &Analytic(&u), &Exact(&u), &dom, 1.0, 0.05).unwrap();
            let exact = 1.0 / (s * s);
            assert!((rep.ratio - exact).abs() < 0.02 * exact, "{s}: {}", rep.ratio);
            assert!(rep.pass);
        }
    }

    #[test]
    fn sobolev_ratio_is_scale_free() {
        let a = 2.0;
        let mut reps = Vec::new();
        for r in [0.05, 0.1] {
            let dom = GraphDomain::flat(2, 40.0 * r).unwrap();
            let mesh = graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, r / 4.0)).unwrap();
            let u = BumpDatum::single([0.0, 3.0 * r, 0.0], 2.0 * r, vec![c(1.0)]);
            reps.push(sobolev_check(&mesh, &Analytic(&u), &Exact(&u), &dom, r, a, 4.0, 10.0).unwrap());
        }
        assert!((reps[0].ratio - reps[1].ratio).abs() < 1e-3 * reps[0].ratio);
        assert!(sobolev_scale_pair(&reps[0], &reps[1]).pass);
    }

    #[test]
    fn reverse_holder_needs_samples_and_scales_homogeneously() {
        let dom = GraphDomain::flat(2, 4.0).unwrap();
        let s = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.001).unwrap();
        let vals: Vec<f64> = s.points.iter().map(|p| 1.0 + p[0].abs()).collect();
        let n = BoundaryField {
            sampling: &s,
            values: &vals,
        };
        let (reps, stab) = reverse_holder_scales(&n, [0.0, 0.0], 1.0, 4.0, 1.0, 3.0).unwrap();
        assert!(stab.pass && reps.iter().all(|r| r.ratio > 0.5 && r.ratio < 1.5));
        let tripled: Vec<f64> = vals.iter().map(|v| 3.0 * v).collect();
        let n3 = BoundaryField {
            sampling: &s,
            values: &tripled,
        };
        let r3 = reverse_holder_check(&n3, [0.0, 0.0], 0.25, 4.0, 1.0, 3.0).unwrap();
        assert!((r3.ratio - reps[1].ratio).abs() < 1e-14);
        let coarse = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.1).unwrap();
        let cv = vec![1.0; coarse.len()];
        let nc = BoundaryField {
            sampling: &coarse,
            values: &cv,
        };
        assert!(matches!(
            reverse_holder_check(&nc, [0.0, 0.0], 0.25, 4.0, 1.0, 3.0),
            Err(Error::Resolution(_))
        ));
        let zeros = vec![0.0; s.len()];
        let nz = BoundaryField {
            sampling: &s,
            values: &zeros,
        };
        let scan = self_improve_scan(&nz, [0.0, 0.0], 1.0, &[3.0, 4.0, 6.0], 3.0).unwrap();
        assert!(scan.vacuous && scan.reports.iter().all(|r| r.vacuous));
    }
}
