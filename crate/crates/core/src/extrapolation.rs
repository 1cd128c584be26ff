//! Real-variable extrapolation: the cutoff splitting `u = v + w`, the
//! hypotheses on `(F, F_Q, R_Q)`, the local `L^p` conclusion, `p` sweeps and
//! the bounded-domain assembly from local charts.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::fields::{Bump, BumpDatum, Cutoff, CutoffDatum, VectorFunction};
use crate::geometry::{critical_exponent, ConeSpec, GraphDomain, SurfaceBall, SurfaceCube};
use crate::maximal::{
    ApproachCloud, BoundaryBall, CloudParams, MaximalEngine, MaximalField, SurfaceRegion, SurfaceSampling,
    TrustedBox,
};
use crate::mesh::{boundary_graded, graded_nodes, graph_box_mesh, polygon_mesh, GraphMeshSpec, Mesh};
use crate::polygon::{localize_polygon, LocalizeOptions, Polygon};
use crate::report::{stability, InequalityReport};
use crate::solver::{solve_dirichlet, ArtificialBc, Solution};
use crate::verifiers::{trace_violations, BoundaryField};

/// Smallest admissible `γ` (above `√(d-1)`) with a 5% margin.
pub fn default_gamma(dim: usize) -> f64 {
    ((dim - 1) as f64).sqrt() * 1.05
}

/// `α = 4γ`, the smallest dilation with `αQ ⊃ Δ_{2γr}(z)` for `r = ℓ(Q)`.
pub fn default_alpha(gamma: f64) -> f64 {
    4.0 * gamma
}

/// Default ratio `|Q| / |Q₀|` bound.
pub const DEFAULT_BETA: f64 = 1.0 / 64.0;

/// Checks `2Q ⊂ Δ_{γr}(z) ⊂ Δ_{2γ²r}(z) ⊂ 2Q₀` with `z` the center and
/// `r` the side of `Q`.
pub fn check_chain(q: &SurfaceCube, q0: &SurfaceCube, gamma: f64, dim: usize) -> Result<()> {
    let r = q.side;
    let lateral = (dim - 1) as f64;
    // 2Q has half-side ℓ(Q)
    if !(r * lateral.sqrt() < gamma * r) {
        return Err(Error::Geometry(format!(
            "2Q is not inside the surface ball of radius gamma r (gamma = {gamma}, need > {})",
            lateral.sqrt()
        )));
    }
    if !(gamma < 2.0 * gamma * gamma) {
        return Err(Error::Geometry("the gamma r ball is not inside the 2 gamma^2 r ball".into()));
    }
    let reach = 2.0 * gamma * gamma * r;
    for c in 0..dim - 1 {
        if (q.center[c] - q0.center[c]).abs() + reach > q0.side * (1.0 + 1e-12) {
            return Err(Error::Geometry(format!(
                "the 2 gamma^2 r ball around {:?} leaves 2Q0",
                &q.center[..dim - 1]
            )));
        }
    }
    Ok(())
}

/// Concentric dilations `2^j Q` inside `2Q₀`, followed by `2Q₀` itself.
pub fn ancestors(q: &SurfaceCube, q0: &SurfaceCube, dim: usize) -> Vec<SurfaceCube> {
    let big = q0.dilate(2.0);
    let mut out = Vec::new();
    let mut c = *q;
    while c.within(&big, dim) {
        out.push(c);
        c = c.dilate(2.0);
    }
    out.push(big);
    out
}

/// `u`, the cutoff part `v` (datum `φf`) and `w = u - v`, with their
/// maximal functions on `αQ`.
pub struct SplitTriple {
    pub u: Solution,
    pub v: Solution,
    pub w: Solution,
    pub cube: SurfaceCube,
    pub z: [f64; 2],
    pub r: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub cutoff: Cutoff,
    /// Samples of `αQ`.
    pub sampling: SurfaceSampling,
    pub f: MaximalField,
    pub f_q: MaximalField,
    pub r_q: MaximalField,
}

impl std::fmt::Debug for SplitTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitTriple")
            .field("cube", &self.cube)
            .field("gamma", &self.gamma)
            .finish()
    }
}

/// Builds the triple for cube `Q` inside `Q₀`. `solve` must return
/// solutions on one shared mesh; `cloud` must cover cones from `αQ`.
#[allow(clippy::too_many_arguments)]
pub fn build_split(
    u: &Solution,
    f: &dyn VectorFunction,
    q: &SurfaceCube,
    q0: &SurfaceCube,
    gamma: f64,
    alpha: f64,
    solve: &dyn Fn(&dyn VectorFunction) -> Result<Solution>,
    domain: &GraphDomain,
    cloud: &ApproachCloud,
    spec: &ConeSpec,
    spacing: f64,
) -> Result<SplitTriple> {
    let dim = domain.dim();
    check_chain(q, q0, gamma, dim)?;
    let r = q.side;
    let z = q.center;
    let cutoff = Cutoff {
        center: z,
        inner: gamma * gamma * r,
        outer: 2.0 * gamma * gamma * r,
        dim,
    };
    let v = solve(&CutoffDatum { cutoff, inner: f })?;
    if !Arc::ptr_eq(u.mesh(), v.mesh()) {
        return Err(Error::Precondition("u and v must live on the same mesh".into()));
    }
    let w = u.difference(&v)?;
    let inner = gamma * gamma * r;
    let bad = trace_violations(u.mesh(), &w, |x| {
        (0..dim - 1).map(|c| (x[c] - z[c]).powi(2)).sum::<f64>() < inner * inner
    });
    if !bad.is_empty() {
        return Err(Error::TraceViolation { points: bad });
    }
    let big = q.dilate(alpha);
    let (lo, hi) = big.bounds();
    let sampling = SurfaceSampling::graph_box(domain, lo, hi, spacing)?.restrict(&big);
    let f_field = MaximalEngine::new(cloud, u).field(&sampling, spec)?;
    let f_q = MaximalEngine::new(cloud, &v).field(&sampling, spec)?;
    let r_q = MaximalEngine::new(cloud, &w).field(&sampling, spec)?;
    Ok(SplitTriple {
        u: u.clone(),
        v,
        w,
        cube: *q,
        z,
        r,
        gamma,
        alpha,
        cutoff,
        sampling,
        f: f_field,
        f_q,
        r_q,
    })
}

/// Exponents and constants of the hypothesis checks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HypothesisParams {
    pub p0: f64,
    pub p1: f64,
    pub c1: f64,
    pub c2: f64,
}

/// The three hypothesis reports: pointwise domination on `2Q`, the
/// reverse-Hölder bound for `R_Q`, and the datum bound for `F_Q`. The
/// datum terms take the sup over the ancestors of `Q`; `datum` samples
/// `|f|` on `2Q₀`.
pub fn check_hypotheses(
    t: &SplitTriple,
    datum: &BoundaryField<'_>,
    q0: &SurfaceCube,
    params: &HypothesisParams,
) -> Result<[InequalityReport; 3]> {
    let dim = t.sampling.dim;
    let two_q = t.cube.dilate(2.0);
    let alpha_q = t.cube.dilate(t.alpha);
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for (i, z) in t.sampling.points.iter().enumerate() {
        if !two_q.contains_boundary_point(z, dim) {
            continue;
        }
        count += 1;
        let (a, b) = (t.f.values[i], t.f_q.values[i] + t.r_q.values[i]);
        let ratio = if b > 0.0 {
            a / b
        } else if a > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(ratio);
    }
    if count == 0 {
        return Err(Error::Resolution("no samples in 2Q".into()));
    }
    let domination = InequalityReport::new("split-domination", worst, 1.0, 1.0 + 1e-12).with("samples", count);

    let mut datum_sup: f64 = 0.0;
    for a in ancestors(&t.cube, q0, dim) {
        datum_sup = datum_sup.max(datum.sampling.lp_norm(datum.values, Some(&a), params.p0, true)?);
    }
    let rq = t.sampling.lp_norm(&t.r_q.values, Some(&two_q), params.p1, true)?;
    let f_avg = t.sampling.lp_norm(&t.f.values, Some(&alpha_q), params.p0, true)?;
    let remainder = InequalityReport::new("split-remainder", rq, f_avg + datum_sup, params.c1)
        .with("p1", params.p1)
        .with("side", t.r)
        .with("datum_sup", datum_sup);
    let fq = t.sampling.lp_norm(&t.f_q.values, Some(&two_q), params.p0, true)?;
    let local = InequalityReport::new("split-local", fq, datum_sup, params.c2)
        .with("p0", params.p0)
        .with("side", t.r);
    Ok([domination, remainder, local])
}

/// `(⨍_{Q₀} N^p)^{1/p} ≤ C (⨍_{2Q₀} N^{p₀})^{1/p₀} + C (⨍_{2Q₀} |f|^p)^{1/p}`;
/// `n` and `datum` must sample `2Q₀`.
pub fn extrapolate_norm(
    n: &BoundaryField<'_>,
    datum: &BoundaryField<'_>,
    q0: &SurfaceCube,
    p: f64,
    p0: f64,
    budget: f64,
) -> Result<InequalityReport> {
    if !(p >= p0) {
        return Err(invalid("p", "must be at least p0"));
    }
    let two = q0.dilate(2.0);
    let left = n.sampling.lp_norm(n.values, Some(q0), p, true)?;
    let n_avg = n.sampling.lp_norm(n.values, Some(&two), p0, true)?;
    let f_avg = datum.sampling.lp_norm(datum.values, Some(&two), p, true)?;
    Ok(InequalityReport::new("extrapolation", left, n_avg + f_avg, budget)
        .with("p", p)
        .with("p0", p0)
        .with("side", q0.side))
}

/// The conclusion at `Q₀` and `2Q₀` and their stability (factor 2).
pub fn extrapolate_doubling(
    n: &BoundaryField<'_>,
    datum: &BoundaryField<'_>,
    q0: &SurfaceCube,
    p: f64,
    p0: f64,
    budget: f64,
) -> Result<(Vec<InequalityReport>, InequalityReport)> {
    let reps = vec![
        extrapolate_norm(n, datum, q0, p, p0, budget)?,
        extrapolate_norm(n, datum, &q0.dilate(2.0), p, p0, budget)?,
    ];
    let stab = stability("extrapolation-doubling", &reps, 2.0).with("p", p);
    Ok((reps, stab))
}

/// Cubes of side `β^{1/(d-1)} ℓ(Q₀) 2^{-j}` for `j < scales`, `positions`
/// random centers per scale, each satisfying the inclusion chain.
pub fn sample_cubes<R: Rng>(
    q0: &SurfaceCube,
    dim: usize,
    gamma: f64,
    beta: f64,
    scales: usize,
    positions: usize,
    rng: &mut R,
) -> Result<Vec<Vec<SurfaceCube>>> {
    let base = beta.powf(1.0 / (dim - 1) as f64) * q0.side;
    let mut out = Vec::new();
    for j in 0..scales {
        let s = base / 2f64.powi(j as i32);
        let room = (0.5 * q0.side - 0.5 * s).min(q0.side - 2.0 * gamma * gamma * s);
        if !(room > 0.0) {
            return Err(invalid("beta", "cubes do not fit inside Q0"));
        }
        let mut row = Vec::new();
        for _ in 0..positions {
            let mut c = q0.center;
            for k in 0..dim - 1 {
                c[k] += rng.gen_range(-room..room);
            }
            let q = SurfaceCube::new(c, s)?;
            check_chain(&q, q0, gamma, dim)?;
            row.push(q);
        }
        out.push(row);
    }
    Ok(out)
}

/// Mesh of a truncated graph domain graded toward the lateral point `focus`.
pub fn focused_mesh(domain: &GraphDomain, focus: [f64; 2], fine: f64, width: f64, coarse: f64) -> Result<Mesh> {
    let r = domain.truncation();
    let axes = (0..domain.dim() - 1)
        .map(|c| graded_nodes(-r, r, focus[c], width, fine, 1.25, coarse))
        .collect();
    graph_box_mesh(
        domain,
        &GraphMeshSpec {
            axes,
            fractions: boundary_graded(fine / r, 1.25, coarse / r),
            top: r,
        },
    )
}

/// `n` bumps centred on the boundary with centres in `[-spread, spread]^{d-1}`,
/// widths in `[w_lo, w_hi]` and unit-modulus complex amplitudes.
pub fn bump_family<R: Rng>(
    domain: &GraphDomain,
    n: usize,
    spread: f64,
    widths: (f64, f64),
    rng: &mut R,
) -> Vec<BumpDatum> {
    (0..n)
        .map(|_| {
            let mut xp = [0.0; 2];
            for c in 0..domain.dim() - 1 {
                xp[c] = rng.gen_range(-spread..spread);
            }
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            BumpDatum {
                bumps: vec![Bump {
                    center: domain.boundary_point(&xp),
                    width: rng.gen_range(widths.0..widths.1),
                    amplitude: vec![C64::from_polar(1.0, phase)],
                }],
                m: 1,
            }
        })
        .collect()
}

/// Per-`p` operator ratios `‖N(u)‖_p / ‖f‖_p` over a data family.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub dim: usize,
    pub p_grid: Vec<f64>,
    /// `ratios[i][k]`: datum `i` at `p_grid[k]`.
    pub ratios: Vec<Vec<f64>>,
    pub max_ratio: Vec<f64>,
    /// `max_ratio[k+1] / max_ratio[k]`.
    pub growth: Vec<f64>,
    /// Largest extrapolation constant per `p`, when computed.
    pub constants: Vec<Option<f64>>,
    pub budget: f64,
    pub flagged: Vec<bool>,
    /// `2(d-1)/(d-2)`; absent in `d = 2`.
    pub endpoint: Option<f64>,
    pub baseline_p0: f64,
    pub baseline_ratio: f64,
}

impl SweepReport {
    /// Columns `p, max_ratio, constant, flagged`, then one column per datum.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["p".to_string(), "max_ratio".into(), "constant".into(), "flagged".into()];
        header.extend((0..self.ratios.len()).map(|i| format!("datum{i}")));
        w.write_record(&header).map_err(|e| Error::Precondition(e.to_string()))?;
        for (k, p) in self.p_grid.iter().enumerate() {
            let mut row = vec![
                format!("{p:e}"),
                format!("{:e}", self.max_ratio[k]),
                self.constants[k].map_or(String::new(), |c| format!("{c:e}")),
                self.flagged[k].to_string(),
            ];
            row.extend(self.ratios.iter().map(|r| format!("{:e}", r[k])));
            w.write_record(&row).map_err(|e| Error::Precondition(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// One report per `p`: the largest ratio against the budget.
    pub fn reports(&self) -> Vec<InequalityReport> {
        self.p_grid
            .iter()
            .zip(&self.max_ratio)
            .map(|(&p, &m)| InequalityReport::new("sweep", m, 1.0, self.budget).with("p", p))
            .collect()
    }
}

/// One member of a sweep family: `N(u)` and `|f|` on a common sampling.
pub struct SweepEntry<'a> {
    pub n: BoundaryField<'a>,
    pub datum: BoundaryField<'a>,
}

/// Sweeps `p` over the family. The first grid entry is the solvability
/// baseline `p₀`. With `q0` given, the extrapolation constant is recorded.
pub fn p_sweep(
    family: &[SweepEntry<'_>],
    p_grid: &[f64],
    dim: usize,
    budget: f64,
    q0: Option<&SurfaceCube>,
) -> Result<SweepReport> {
    if family.is_empty() {
        return Err(invalid("family", "data family is empty"));
    }
    if p_grid.is_empty() || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("p_grid", "grid not increasing"));
    }
    let p0 = p_grid[0];
    let mut ratios = Vec::new();
    for e in family {
        let mut row = Vec::new();
        for &p in p_grid {
            let num = e.n.sampling.lp_norm(e.n.values, None, p, false)?;
            let den = e.datum.sampling.lp_norm(e.datum.values, None, p, false)?;
            if den == 0.0 {
                return Err(invalid("family", "datum vanishes identically"));
            }
            row.push(num / den);
        }
        ratios.push(row);
    }
    let max_ratio: Vec<f64> = (0..p_grid.len())
        .map(|k| ratios.iter().map(|r| r[k]).fold(0.0, f64::max))
        .collect();
    let growth = max_ratio.windows(2).map(|w| w[1] / w[0]).collect();
    let mut constants = Vec::new();
    for &p in p_grid {
        constants.push(match q0 {
            Some(q0) => {
                let mut worst: f64 = 0.0;
                for e in family {
                    worst = worst.max(extrapolate_norm(&e.n, &e.datum, q0, p, p0, f64::INFINITY)?.ratio);
                }
                Some(worst)
            }
            None => None,
        });
    }
    let endpoint = (dim > 2).then(|| critical_exponent(dim));
    Ok(SweepReport {
        dim,
        p_grid: p_grid.to_vec(),
        flagged: max_ratio.iter().map(|&m| !(m <= budget)).collect(),
        baseline_p0: p0,
        baseline_ratio: max_ratio[0],
        ratios,
        max_ratio,
        growth,
        constants,
        budget,
        endpoint,
    })
}

/// Discretization of the bounded-domain check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PolygonParams {
    /// Uniform refinement levels of the base triangulation.
    pub levels: usize,
    /// Boundary sample spacing.
    pub spacing: f64,
    /// Lowest approach layer.
    pub t_min: f64,
    pub density: f64,
    pub budget: f64,
}

/// `‖N(u)‖_{L^p(∂P)} / ‖f‖_{L^p(∂P)}` on a polygon for each `p`; the
/// context lists the chart-local ratios.
pub fn bounded_domain_wrap(
    poly: &Polygon,
    datum: &dyn VectorFunction,
    coeffs: &CoefficientField,
    ps: &[f64],
    params: &PolygonParams,
) -> Result<Vec<InequalityReport>> {
    let charts = localize_polygon(poly, &LocalizeOptions::default())?;
    let m = charts.iter().map(|c| c.lipschitz()).fold(0.0, f64::max);
    let spec = ConeSpec::default_for(m);
    let mesh = Arc::new(polygon_mesh(poly.vertices(), params.levels)?);
    let u = solve_dirichlet(mesh.clone(), coeffs, datum, &ArtificialBc::Zero)?;
    let diam = poly
        .vertices()
        .iter()
        .flat_map(|a| poly.vertices().iter().map(move |b| (a[0] - b[0]).hypot(a[1] - b[1])))
        .fold(0.0, f64::max);
    let cloud = ApproachCloud::polygon(
        poly,
        &CloudParams {
            t_min: params.t_min,
            t_max: diam,
            density: params.density,
            aperture: spec.aperture,
        },
        Some(&mesh),
    )?;
    let sampling = SurfaceSampling::polygon(poly, params.spacing)?;
    let n = MaximalEngine::new(&cloud, &u).field(&sampling, &spec)?;
    let f = sampling.datum_values(datum);
    let mut out = Vec::new();
    for &p in ps {
        let left = sampling.lp_norm(&n.values, None, p, false)?;
        let right = sampling.lp_norm(&f, None, p, false)?;
        let mut local = Vec::new();
        for (i, c) in charts.iter().enumerate() {
            let ball = BoundaryBall {
                center: [c.center[0], c.center[1], 0.0],
                radius: c.radius,
            };
            let nl = sampling
                .lp_norm(&n.values, Some(&ball), p, false)
                .map_err(|e| Error::Chart {
                    chart: i,
                    source: Box::new(e),
                })?;
            let fl = sampling.lp_norm(&f, Some(&ball), p, false)?;
            local.push(if fl > 0.0 { nl / fl } else { f64::NAN });
        }
        out.push(
            InequalityReport::new("bounded-domain", left, right, params.budget)
                .with("p", p)
                .with("levels", params.levels)
                .with("charts", charts.len())
                .with("lipschitz", m)
                .with("aperture", spec.aperture)
                .with(
                    "local_ratios",
                    local.iter().map(|v| if v.is_finite() { Some(*v) } else { None }).collect::<Vec<_>>(),
                ),
        );
    }
    Ok(out)
}

/// Bounded-domain ratios at `levels` and `levels + 1`, with a stability
/// report per `p` (factor `1 + tol`).
pub fn bounded_domain_refinement(
    poly: &Polygon,
    datum: &dyn VectorFunction,
    coeffs: &CoefficientField,
    ps: &[f64],
    params: &PolygonParams,
    tol: f64,
) -> Result<Vec<InequalityReport>> {
    let coarse = bounded_domain_wrap(poly, datum, coeffs, ps, params)?;
    let fine_params = PolygonParams {
        levels: params.levels + 1,
        ..*params
    };
    let fine = bounded_domain_wrap(poly, datum, coeffs, ps, &fine_params)?;
    let mut out = Vec::new();
    for (a, b) in coarse.into_iter().zip(fine) {
        let p = a.context["p"].clone();
        let stab = stability("bounded-domain-refinement", &[a.clone(), b.clone()], 1.0 + tol).with("p", p);
        out.push(a);
        out.push(b);
        out.push(stab);
    }
    Ok(out)
}

/// Approach cloud for a cube's neighbourhood `αQ` on a truncated graph domain.
pub fn cube_cloud(domain: &GraphDomain, cube: &SurfaceCube, alpha: f64, spec: &ConeSpec, density: f64) -> Result<ApproachCloud> {
    let (lo, hi) = cube.dilate(alpha).bounds();
    let trusted = TrustedBox::for_domain(domain);
    ApproachCloud::graph(
        domain,
        lo,
        hi,
        &CloudParams {
            t_min: cube.side / 16.0,
            t_max: 0.9 * trusted.top,
            density,
            aperture: spec.aperture,
        },
        Some(trusted),
        None,
    )
}

/// The surface ball `Δ_r(z)` as a cube-compatible region.
pub fn surface_ball(z: [f64; 2], r: f64) -> Result<SurfaceBall> {
    SurfaceBall::new(z, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ConstantField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_and_ancestors() {
        let q0 = SurfaceCube::new([0.0, 0.0], 1.0).unwrap();
        let g = default_gamma(2);
        let q = SurfaceCube::new([0.1, 0.0], 1.0 / 64.0).unwrap();
        check_chain(&q, &q0, g, 2).unwrap();
        assert!(matches!(check_chain(&q, &q0, 0.9, 2), Err(Error::Geometry(_))));
        let edge = SurfaceCube::new([0.99, 0.0], 1.0 / 64.0).unwrap();
        match check_chain(&edge, &q0, g, 2) {
            Err(Error::Geometry(m)) => assert!(m.contains("2Q0")),
            other => panic!("{other:?}"),
        }
        let a = ancestors(&q, &q0, 2);
        assert_eq!(a.last().unwrap().side, 2.0);
        assert!(a.windows(2).all(|w| w[1].side > w[0].side));
        // d = 3 needs gamma above sqrt 2
        assert!(default_gamma(3) > 2f64.sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cubes = sample_cubes(&q0, 2, g, DEFAULT_BETA, 3, 4, &mut rng).unwrap();
        assert_eq!(cubes.len(), 3);
        assert!((cubes[2][0].side - 1.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn split_of_a_bump_straddling_the_cutoff() {
        let dom = GraphDomain::flat(2, 2.0).unwrap();
        let q0 = SurfaceCube::new([0.0, 0.0], 1.0).unwrap();
        let q = SurfaceCube::new([0.05, 0.0], 1.0 / 64.0).unwrap();
        let mesh = Arc::new(focused_mesh(&dom, q.center, 0.001, 0.1, 0.1).unwrap());
        let coeffs = CoefficientField::identity(2, 1);
        let solve = |d: &dyn VectorFunction| solve_dirichlet(mesh.clone(), &coeffs, d, &ArtificialBc::Zero);
        let f = BumpDatum::single([0.08, 0.0, 0.0], 0.1, vec![C64::new(1.0, 0.5)]);
        let u = solve(&f).unwrap();
        let g = default_gamma(2);
        let alpha = default_alpha(g);
        let spec = ConeSpec::default_for(0.0);
        let cloud = cube_cloud(&dom, &q, alpha, &spec, 2.0).unwrap();
        let t = build_split(&u, &f, &q, &q0, g, alpha, &solve, &dom, &cloud, &spec, q.side / 16.0).unwrap();
        for k in 0..u.values().len() {
            assert!((t.v.values()[k] + t.w.values()[k] - u.values()[k]).norm() < 1e-15);
        }
        let ds = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.002).unwrap();
        let dv = ds.datum_values(&f);
        let datum = BoundaryField {
            sampling: &ds,
            values: &dv,
        };
        let params = HypothesisParams {
            p0: 2.0,
            p1: 8.0,
            c1: 50.0,
            c2: 50.0,
        };
        let [dom_rep, rem, loc] = check_hypotheses(&t, &datum, &q0, &params).unwrap();
        assert!(dom_rep.pass, "{dom_rep:?}");
        assert!(rem.ratio.is_finite() && loc.ratio.is_finite());
        assert!(rem.left > 0.0 && loc.left > 0.0);

        // datum inside the inner cutoff: v = u, w = 0
        let inside = BumpDatum::single([0.05, 0.0, 0.0], 0.01, vec![C64::new(1.0, 0.0)]);
        let u2 = solve(&inside).unwrap();
        let t2 = build_split(&u2, &inside, &q, &q0, g, alpha, &solve, &dom, &cloud, &spec, q.side / 16.0).unwrap();
        assert!(t2.r_q.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sweep_is_homogeneous_and_validates_grid() {
        let dom = GraphDomain::flat(2, 4.0).unwrap();
        let s = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], 0.01).unwrap();
        let f: Vec<f64> = s.points.iter().map(|p| (1.0 - p[0] * p[0]).max(0.0)).collect();
        let n: Vec<f64> = f.iter().map(|v| 1.5 * v + 0.1).collect();
        let f3: Vec<f64> = f.iter().map(|v| 3.0 * v).collect();
        let n3: Vec<f64> = n.iter().map(|v| 3.0 * v).collect();
        let fam = [
            SweepEntry {
                n: BoundaryField { sampling: &s, values: &n },
                datum: BoundaryField { sampling: &s, values: &f },
            },
            SweepEntry {
                n: BoundaryField { sampling: &s, values: &n3 },
                datum: BoundaryField { sampling: &s, values: &f3 },
            },
        ];
        let rep = p_sweep(&fam, &[2.0, 3.0, 4.0], 2, 100.0, None).unwrap();
        for k in 0..3 {
            assert!((rep.ratios[0][k] - rep.ratios[1][k]).abs() < 1e-13 * rep.ratios[0][k]);
        }
        assert!(rep.endpoint.is_none());
        assert!(p_sweep(&fam, &[4.0, 3.0], 2, 100.0, None).is_err());
        assert!(p_sweep(&[], &[2.0], 2, 100.0, None).is_err());
        assert_eq!(p_sweep(&fam, &[2.0], 3, 100.0, None).unwrap().endpoint, Some(4.0));
    }

    #[test]
    fn square_with_constant_datum() {
        let sq = Polygon::unit_square();
        let one = ConstantField(vec![C64::new(1.0, 0.0)]);
        let coeffs = CoefficientField::identity(2, 1);
        let params = PolygonParams {
            levels: 3,
            spacing: 0.02,
            t_min: 0.02,
            density: 1.0,
            budget: 10.0,
        };
        let reps = bounded_domain_wrap(&sq, &one, &coeffs, &[2.0, 3.0, 8.0], &params).unwrap();
        for r in reps {
            assert!((r.ratio - 1.0).abs() < 1e-6, "{}", r.ratio);
        }
    }
}
