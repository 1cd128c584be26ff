//! Experiment orchestration: each named experiment produces inequality
//! reports, a manifest and text artifacts.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::{CoefficientField, CoefficientSpec};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::extrapolation::{
    build_split, bump_family, bounded_domain_refinement, bounded_domain_wrap, check_hypotheses, cube_cloud,
    extrapolate_doubling, focused_mesh, p_sweep, sample_cubes, HypothesisParams, PolygonParams, SweepEntry,
    SweepReport,
};
use crate::fields::{Bump, BumpDatum, ConstantField, GapPower, VectorFunction};
use crate::geometry::{
    ball_in_double_cone, ConeSpec, Containment, Domain, GraphDomain, Point, SurfaceBall, SurfaceCube,
};
use crate::integrate::Analytic;
use crate::maximal::{ApproachCloud, CloudParams, Exact, MaximalEngine, MaximalField, SurfaceSampling, TrustedBox};
use crate::mesh::{graded_nodes, graph_box_mesh, GraphMeshSpec, Mesh};
use crate::plot::{render_svg, Marker, Series};
use crate::poisson::PoissonExtension;
use crate::polygon::Polygon;
use crate::report::{stability, to_csv, to_json, InequalityReport};
use crate::solver::{solve_dirichlet, ArtificialBc, Solution};
use crate::verifiers::{
    cacciopoli_check, hardy_check, reverse_holder_scales, self_improve_scan, sobolev_check, sobolev_scale_pair,
    BoundaryField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Geometry,
    Cacciopoli,
    Hardy,
    Sobolev,
    ReverseHolder,
    SelfImprove,
    Extrapolate,
    Sweep,
    Polygon,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Geometry,
        Experiment::Cacciopoli,
        Experiment::Hardy,
        Experiment::Sobolev,
        Experiment::ReverseHolder,
        Experiment::SelfImprove,
        Experiment::Extrapolate,
        Experiment::Sweep,
        Experiment::Polygon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Geometry => "geometry",
            Experiment::Cacciopoli => "cacciopoli",
            Experiment::Hardy => "hardy",
            Experiment::Sobolev => "sobolev",
            Experiment::ReverseHolder => "reverse-holder",
            Experiment::SelfImprove => "self-improve",
            Experiment::Extrapolate => "extrapolate",
            Experiment::Sweep => "sweep",
            Experiment::Polygon => "polygon",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid("experiment", format!("unknown experiment {s:?}")))
    }
}

/// A report and whether it counts toward the aggregate verdict.
#[derive(Debug, Clone)]
pub struct Check {
    pub report: InequalityReport,
    pub gating: bool,
}

impl Check {
    fn gate(report: InequalityReport) -> Self {
        Check { report, gating: true }
    }

    fn info(report: InequalityReport) -> Self {
        Check { report, gating: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    pub name: String,
    pub pass: bool,
    pub vacuous: bool,
    pub gating: bool,
    #[serde(serialize_with = "crate::report::ratio_repr::serialize")]
    pub ratio: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
    /// File name to contents, written next to the manifest.
    pub artifacts: BTreeMap<String, String>,
}

impl RunOutput {
    pub fn reports(&self) -> Vec<InequalityReport> {
        self.checks.iter().map(|c| c.report.clone()).collect()
    }

    /// Reports with the given name.
    pub fn named(&self, name: &str) -> Vec<&InequalityReport> {
        self.checks.iter().map(|c| &c.report).filter(|r| r.name == name).collect()
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    artifacts: BTreeMap<String, String>,
}

/// Runs one experiment with the given seed.
pub fn run(cfg: &ExperimentConfig, exp: Experiment, seed: u64) -> Result<RunOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match exp {
        Experiment::Geometry => geometry(cfg, &mut rng),
        Experiment::Cacciopoli => cacciopoli(cfg, &mut rng),
        Experiment::Hardy => hardy(cfg),
        Experiment::Sobolev => sobolev(cfg),
        Experiment::ReverseHolder => reverse_holder(cfg, &mut rng, false),
        Experiment::SelfImprove => reverse_holder(cfg, &mut rng, true),
        Experiment::Extrapolate => extrapolate(cfg, &mut rng),
        Experiment::Sweep => sweep(cfg, &mut rng),
        Experiment::Polygon => polygon(cfg),
    }
    .map_err(|e| e.context(format!("experiment {}", exp.name())))?;
    let mut outcomes = Vec::new();
    for (i, c) in out.checks.iter().enumerate() {
        outcomes.push(CheckOutcome {
            id: format!("{:03}-{}", i, c.report.name),
            name: c.report.name.clone(),
            pass: c.report.pass,
            vacuous: c.report.vacuous,
            gating: c.gating,
            ratio: c.report.ratio,
            budget: c.report.budget,
        });
    }
    let pass = out.checks.iter().all(|c| !c.gating || c.report.pass);
    let manifest = RunManifest {
        experiment: exp.name().into(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        checks: outcomes,
        pass,
    };
    let mut artifacts = out.artifacts;
    let reports: Vec<InequalityReport> = out.checks.iter().map(|c| c.report.clone()).collect();
    artifacts.insert("reports.json".into(), to_json(&reports)?);
    artifacts.insert("reports.csv".into(), to_csv(&reports)?);
    artifacts.insert(
        "manifest.json".into(),
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Precondition(e.to_string()))?,
    );
    Ok(RunOutput {
        manifest,
        checks: out.checks,
        artifacts,
    })
}

/// Writes every artifact of a run into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &BTreeMap<String, String>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in artifacts {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn c1(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn origin(dim: usize) -> Point {
    let _ = dim;
    [0.0; 3]
}

/// Solves with zero values on the artificial faces.
fn solve(mesh: &Arc<Mesh>, coeffs: &CoefficientField, datum: &dyn VectorFunction) -> Result<Solution> {
    solve_dirichlet(mesh.clone(), coeffs, datum, &ArtificialBc::Zero)
}

fn geometry(_cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let domains = vec![
        ("flat", GraphDomain::flat(2, 10.0)?),
        ("sawtooth", GraphDomain::sawtooth(1.0, 1.0, 10.0, 10.0)?),
        ("random", GraphDomain::random_piecewise_linear(0.5, 0.5, 10.0, 10.0, rng)?),
    ];
    let mut out = Outcome::default();
    for (name, dom) in &domains {
        let m = dom.lipschitz();
        let spec = ConeSpec::default_for(m).truncated(2.0);
        let pairs = 500;
        let mut fails = 0usize;
        for _ in 0..pairs {
            let z = dom.boundary_point(&[rng.gen_range(-2.0..2.0), 0.0]);
            let x = dom
                .sample_in_cone(&z, &spec, 2.0, rng)
                .ok_or_else(|| Error::Geometry("could not sample the cone".into()))?;
            if let Containment::Counterexample(_) = ball_in_double_cone(dom, &z, &spec, &x, 4, 16)? {
                fails += 1;
            }
        }
        out.checks.push(Check::gate(
            InequalityReport::new("ball-in-double-cone", fails as f64, pairs as f64, 0.0)
                .with("domain", *name)
                .with("lipschitz", m),
        ));
        // δ ≤ δ̃ ≤ (1 + M²)^{1/2} δ
        let mut lower: f64 = 0.0;
        let mut upper: f64 = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let xp = [rng.gen_range(-3.0..3.0), 0.0];
            let x = dom.lift(&xp, rng.gen_range(1e-3..3.0));
            let delta = dom.distance_to_boundary(&x)?;
            let gap = dom.vertical_gap(&x)?;
            lower = lower.max(delta / gap);
            upper = upper.max(gap / (delta * (1.0 + m * m).sqrt()));
        }
        out.checks.push(Check::gate(
            InequalityReport::new("distance-below-gap", lower, 1.0, 1.0 + 1e-9)
                .with("domain", *name)
                .with("points", n),
        ));
        out.checks.push(Check::gate(
            InequalityReport::new("gap-below-scaled-distance", upper, 1.0, 1.0 + 1e-9)
                .with("domain", *name)
                .with("points", n),
        ));
    }
    Ok(out)
}

fn hardy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let mesh = graph_box_mesh(&dom, &GraphMeshSpec::graded(&dom, cfg.domain.mesh_h, 1.2, 1.3, 0.5))?;
    let mut out = Outcome::default();
    let flat = dom.lipschitz() == 0.0;
    for s in [0.51, 0.6, 0.75, 1.0] {
        let u = GapPower { domain: &dom, exponent: s };
        let mut rep = hardy_check(&mesh, &Analytic(&u), &Exact(&u), &dom, 1.0, cfg.budgets.hardy_tol)?.with("s", s);
        if flat {
            let exact = 1.0 / (s * s);
            let err = (rep.ratio - exact).abs() / exact;
            rep = rep.with("expected", exact).with("relative_error", err);
        }
        out.checks.push(Check::gate(rep));
    }
    Ok(out)
}

/// Data made of `count` bumps centred on the boundary at lateral distance
/// in `[near, far]` from the origin.
fn outside_bumps(dom: &GraphDomain, count: usize, near: f64, far: f64, width: (f64, f64), rng: &mut ChaCha8Rng) -> BumpDatum {
    let dim = dom.dim();
    let mut bumps = Vec::new();
    for _ in 0..count {
        let w = rng.gen_range(width.0..width.1);
        let rho = rng.gen_range(near + w..far + w);
        let xp = if dim == 2 {
            [if rng.gen::<bool>() { rho } else { -rho }, 0.0]
        } else {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [rho * th.cos(), rho * th.sin()]
        };
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        bumps.push(Bump {
            center: dom.boundary_point(&xp),
            width: w,
            amplitude: vec![C64::from_polar(rng.gen_range(0.5..1.5), phase)],
        });
    }
    BumpDatum { bumps, m: 1 }
}

fn cacciopoli(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let coeffs = cfg.coefficient_field()?;
    let h = cfg.domain.mesh_h;
    let mut out = Outcome::default();
    let o = origin(dom.dim());
    // gap function: on a flat boundary this is u = x_d with ratio 1/4
    let mesh = Arc::new(graph_box_mesh(&dom, &GraphMeshSpec::graded(&dom, h, 1.2, 1.25, 0.5))?);
    let gap = GapPower { domain: &dom, exponent: 1.0 };
    let rep = cacciopoli_check(&mesh, &Analytic(&gap), &Exact(&gap), &dom, &o, 0.5, cfg.budgets.kappa)?;
    let rep = if dom.lipschitz() == 0.0 { rep.with("expected", 0.25) } else { rep };
    out.checks.push(Check::gate(rep.with("field", "gap")));
    for family in 0..3 {
        let datum = outside_bumps(&dom, 3, 1.2, 2.5, (0.3, 0.6), rng);
        let u = solve(&mesh, &coeffs, &datum)?;
        let mut reps = Vec::new();
        for r in [0.4, 0.2, 0.1] {
            let rep = cacciopoli_check(&mesh, &u, &u, &dom, &o, r, cfg.budgets.kappa)?.with("family", family);
            reps.push(rep.clone());
            out.checks.push(Check::gate(rep));
        }
        out.checks
            .push(Check::gate(stability("cacciopoli-scales", &reps, 2.0).with("family", family)));
    }
    Ok(out)
}

fn sobolev(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dim = cfg.domain.dim;
    let exponent = if dim == 3 { 6.0 } else { 4.0 };
    let a = ConeSpec::default_for(0.0).aperture;
    let mut out = Outcome::default();
    let mut reps = Vec::new();
    for r in [0.05, 0.1] {
        let top = 24.0 * r;
        let dom = GraphDomain::flat(dim, top)?;
        // graded toward the bump, identical up to scaling at both scales
        let axis = graded_nodes(-top, top, 0.0, 2.5 * r, r / 4.0, 1.3, 3.0 * r);
        let fractions = graded_nodes(0.0, 1.0, 3.0 / 24.0, 2.5 / 24.0, 1.0 / 96.0, 1.3, 3.0 / 24.0);
        let mesh = graph_box_mesh(
            &dom,
            &GraphMeshSpec {
                axes: vec![axis; dim - 1],
                fractions,
                top,
            },
        )?;
        let mut center = [0.0; 3];
        center[dim - 1] = 3.0 * r;
        let u = BumpDatum::single(center, 2.0 * r, vec![c1(1.0)]);
        let rep = sobolev_check(&mesh, &Analytic(&u), &Exact(&u), &dom, r, a, exponent, cfg.budgets.sobolev)?;
        reps.push(rep.clone());
        out.checks.push(Check::gate(rep));
    }
    out.checks.push(Check::gate(sobolev_scale_pair(&reps[0], &reps[1])));
    Ok(out)
}

/// Boundary samples and `N(u)` for a finite element solution on a lateral box.
#[allow(clippy::too_many_arguments)]
fn fem_maximal(
    dom: &GraphDomain,
    u: &Solution,
    lo: [f64; 2],
    hi: [f64; 2],
    spacing: f64,
    t_min: f64,
    density: f64,
    spec: &ConeSpec,
    region: Option<&SurfaceBall>,
) -> Result<(SurfaceSampling, MaximalField)> {
    let trusted = TrustedBox::for_domain(dom);
    let cloud = ApproachCloud::graph(
        dom,
        lo,
        hi,
        &CloudParams {
            t_min,
            t_max: 0.9 * trusted.top,
            density,
            aperture: spec.aperture,
        },
        Some(trusted),
        None,
    )?;
    let mut sampling = SurfaceSampling::graph_box(dom, lo, hi, spacing)?;
    if let Some(b) = region {
        sampling = sampling.restrict(b);
    }
    let field = MaximalEngine::new(&cloud, u).field(&sampling, spec)?;
    Ok((sampling, field))
}

/// `k = 10a(M+2)`; the cone is truncated at `4kR` unless the trusted
/// height is lower.
fn rh_spec(cfg: &ExperimentConfig, dom: &GraphDomain, big_r: f64) -> ConeSpec {
    let k = crate::geometry::ball_factor(cfg.cone.aperture, dom.lipschitz());
    let h = cfg.cone.height.unwrap_or(4.0 * k * big_r);
    ConeSpec {
        aperture: cfg.cone.aperture,
        height: Some(h),
    }
}

fn reverse_holder(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, scan: bool) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let dim = dom.dim();
    let coeffs = cfg.coefficient_field()?;
    let big_r = 1.0;
    let h = cfg.domain.mesh_h;
    let mesh = Arc::new(graph_box_mesh(
        &dom,
        &GraphMeshSpec::graded(&dom, h, 1.5 * big_r, 1.3, if dim == 3 { 1.0 } else { 0.5 }),
    )?);
    let spec = rh_spec(cfg, &dom, big_r);
    let (spacing, t_min, density) = if dim == 2 {
        (big_r / 128.0, big_r / 64.0, cfg.sweep.density)
    } else {
        (big_r / 32.0, big_r / 16.0, 1.0)
    };
    let ball = SurfaceBall::new([0.0, 0.0], big_r)?;
    let mut out = Outcome::default();
    let mut summary = Vec::new();
    for family in 0..3 {
        let datum = outside_bumps(&dom, 2, 1.6 * big_r, 3.0 * big_r, (0.3, 0.6), rng);
        let u = solve(&mesh, &coeffs, &datum)?;
        let hyp = cacciopoli_check(&mesh, &u, &u, &dom, &origin(dim), big_r / 2.0, cfg.budgets.kappa)?
            .with("family", family);
        out.checks.push(Check::gate(hyp));
        let (sampling, n) = fem_maximal(
            &dom,
            &u,
            [-big_r, -big_r],
            [big_r, big_r],
            spacing,
            t_min,
            density,
            &spec,
            Some(&ball),
        )?;
        out.artifacts.insert(format!("maximal-{family}.csv"), n.to_csv());
        let bf = BoundaryField {
            sampling: &sampling,
            values: &n.values,
        };
        if scan {
            let s = self_improve_scan(&bf, [0.0, 0.0], big_r, &cfg.sweep.q_grid, cfg.budgets.reverse_holder)?;
            let base = cfg.sweep.q_grid[0];
            for r in s.reports {
                let q = r.context.get("q").and_then(|v| v.as_f64()).unwrap_or(base);
                let r = r.with("family", family);
                out.checks.push(if q == base { Check::gate(r) } else { Check::info(r) });
            }
            summary.push(serde_json::json!({
                "family": family,
                "q_bar": s.q_bar,
                "epsilon": s.epsilon,
                "vacuous": s.vacuous,
            }));
        } else {
            let (reps, stab) = reverse_holder_scales(
                &bf,
                [0.0, 0.0],
                big_r,
                cfg.sweep.q,
                cfg.sweep.lower,
                cfg.budgets.reverse_holder,
            )?;
            for r in reps {
                out.checks.push(Check::gate(r.with("family", family)));
            }
            out.checks.push(Check::gate(
                stab.with("family", family).with("height", spec.height.unwrap_or(f64::INFINITY)),
            ));
        }
    }
    if scan {
        out.artifacts.insert(
            "self-improve.json".into(),
            serde_json::to_string_pretty(&summary).map_err(|e| Error::Precondition(e.to_string()))?,
        );
    }
    Ok(out)
}

/// Three bumps spread over `[-1, 1]`.
fn baseline_datum() -> BumpDatum {
    let mk = |x: f64, w: f64, a: C64| Bump {
        center: [x, 0.0, 0.0],
        width: w,
        amplitude: vec![a],
    };
    BumpDatum {
        bumps: vec![
            mk(-0.6, 0.5, C64::new(1.0, 0.0)),
            mk(0.0, 0.45, C64::new(0.3, -0.8)),
            mk(0.55, 0.5, C64::new(-0.7, 0.4)),
        ],
        m: 1,
    }
}

fn extrapolate(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    if dom.dim() != 2 || dom.lipschitz() != 0.0 {
        return Err(invalid("domain", "the extrapolation experiment runs on the flat d = 2 domain"));
    }
    let coeffs = cfg.coefficient_field()?;
    let s = &cfg.sweep;
    let q0 = SurfaceCube::new([0.0, 0.0], 1.0)?;
    let f = baseline_datum();
    let spec = ConeSpec::default_for(0.0);
    let cubes = sample_cubes(&q0, 2, s.gamma, s.beta, s.scales, s.positions, rng)?;
    let finest = cubes.last().map_or(q0.side, |row| row[0].side);
    let datum_sampling = SurfaceSampling::graph_box(&dom, [-1.0, 0.0], [1.0, 0.0], finest / 8.0)?;
    let datum_values = datum_sampling.datum_values(&f);
    let datum = BoundaryField {
        sampling: &datum_sampling,
        values: &datum_values,
    };
    let params = HypothesisParams {
        p0: s.p0,
        p1: s.p1,
        c1: cfg.budgets.c1,
        c2: cfg.budgets.c2,
    };
    let mut out = Outcome::default();
    let mut remainder_by_scale = Vec::new();
    let mut local_by_scale = Vec::new();
    for (j, row) in cubes.iter().enumerate() {
        let mut worst_rem: Option<InequalityReport> = None;
        let mut worst_loc: Option<InequalityReport> = None;
        for q in row {
            let mesh = Arc::new(focused_mesh(&dom, q.center, q.side / 16.0, s.alpha * q.side, 0.5)?);
            let solver = |d: &dyn VectorFunction| solve(&mesh, &coeffs, d);
            let u = solver(&f)?;
            let cloud = cube_cloud(&dom, q, s.alpha, &spec, s.density)?;
            let t = build_split(&u, &f, q, &q0, s.gamma, s.alpha, &solver, &dom, &cloud, &spec, q.side / 16.0)?;
            let [d, rem, loc] = check_hypotheses(&t, &datum, &q0, &params)?;
            let tag = |r: InequalityReport| r.with("scale", j).with("center", q.center[0]);
            out.checks.push(Check::gate(tag(d)));
            let (rem, loc) = (tag(rem), tag(loc));
            out.checks.push(Check::gate(rem.clone()));
            out.checks.push(Check::gate(loc.clone()));
            if worst_rem.as_ref().map_or(true, |w| rem.ratio > w.ratio) {
                worst_rem = Some(rem);
            }
            if worst_loc.as_ref().map_or(true, |w| loc.ratio > w.ratio) {
                worst_loc = Some(loc);
            }
        }
        remainder_by_scale.extend(worst_rem);
        local_by_scale.extend(worst_loc);
    }
    out.checks.push(Check::gate(stability("split-remainder-scales", &remainder_by_scale, 2.0)));
    out.checks.push(Check::gate(stability("split-local-scales", &local_by_scale, 2.0)));

    // the conclusion against the half-plane Poisson integral
    if let CoefficientSpec::Identity = cfg.coefficients {
        let u = PoissonExtension::new(&f, (-1.1, 1.1))?;
        let (sampling, n) = oracle_maximal(&f, &u, [-2.0, 2.0], 0.005, 0.01, s.density, &spec)?;
        let values = sampling.datum_values(&f);
        let nb = BoundaryField {
            sampling: &sampling,
            values: &n.values,
        };
        let db = BoundaryField {
            sampling: &sampling,
            values: &values,
        };
        for &p in s.p_grid.iter().filter(|&&p| p > s.p0) {
            let (reps, stab) = extrapolate_doubling(&nb, &db, &q0, p, s.p0, cfg.budgets.extrapolation)?;
            for r in reps {
                out.checks.push(Check::gate(r));
            }
            out.checks.push(Check::gate(stab));
        }
    }
    Ok(out)
}

/// `N(u)` for a closed-form `u` over `[lo, hi]` in `d = 2`.
fn oracle_maximal(
    _f: &dyn VectorFunction,
    u: &dyn VectorFunction,
    range: [f64; 2],
    spacing: f64,
    t_min: f64,
    density: f64,
    spec: &ConeSpec,
) -> Result<(SurfaceSampling, MaximalField)> {
    let dom = GraphDomain::flat(2, 64.0)?;
    let width = range[1] - range[0];
    let cloud = ApproachCloud::graph(
        &dom,
        [range[0], 0.0],
        [range[1], 0.0],
        &CloudParams {
            t_min,
            t_max: 8.0 * width,
            density,
            aperture: spec.aperture,
        },
        None,
        None,
    )?;
    let sampling = SurfaceSampling::graph_box(&dom, [range[0], 0.0], [range[1], 0.0], spacing)?;
    let field = MaximalEngine::new(&cloud, &Exact(u)).field(&sampling, spec)?;
    Ok((sampling, field))
}

/// Runs the sweep and returns it with its report checks.
pub fn sweep_report(cfg: &ExperimentConfig, seed: u64) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rep, _) = sweep_inner(cfg, &mut rng)?;
    Ok(rep)
}

fn sweep_inner(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<(SweepReport, Option<SurfaceCube>)> {
    let dom = cfg.build_domain()?;
    let dim = dom.dim();
    let s = &cfg.sweep;
    let spec = ConeSpec {
        aperture: cfg.cone.aperture,
        height: cfg.cone.height,
    };
    let oracle = dim == 2 && dom.lipschitz() == 0.0 && cfg.coefficients == CoefficientSpec::Identity;
    let family = bump_family(&dom, s.family, if dim == 2 { 1.0 } else { 0.5 }, (0.2, 0.6), rng);
    let mut fields = Vec::new();
    if oracle {
        for f in &family {
            let sup = f.support_radius();
            let u = PoissonExtension::new(f, (-sup, sup))?;
            fields.push(oracle_maximal(f, &u, [-4.0, 4.0], 0.01, 0.02, s.density, &spec)?);
        }
    } else {
        let coeffs = cfg.coefficient_field()?;
        let coarse = if dim == 3 { 1.0 } else { 0.5 };
        let mesh = Arc::new(graph_box_mesh(
            &dom,
            &GraphMeshSpec::graded(&dom, cfg.domain.mesh_h, 1.5, 1.3, coarse),
        )?);
        let (half, spacing, t_min, density) = if dim == 2 {
            (2.0, 0.01, 0.02, s.density)
        } else {
            (1.0, 0.05, 0.05, 1.0)
        };
        for f in &family {
            let u = solve(&mesh, &coeffs, f)?;
            fields.push(fem_maximal(
                &dom,
                &u,
                [-half, -half],
                [half, half],
                spacing,
                t_min,
                density,
                &spec,
                None,
            )?);
        }
    }
    let data: Vec<Vec<f64>> = family
        .iter()
        .zip(&fields)
        .map(|(f, (sampling, _))| sampling.datum_values(f))
        .collect();
    let entries: Vec<SweepEntry<'_>> = fields
        .iter()
        .zip(&data)
        .map(|((sampling, n), d)| SweepEntry {
            n: BoundaryField {
                sampling,
                values: &n.values,
            },
            datum: BoundaryField { sampling, values: d },
        })
        .collect();
    let q0 = (dim == 2).then(|| SurfaceCube::new([0.0, 0.0], 1.0)).transpose()?;
    Ok((p_sweep(&entries, &s.p_grid, dim, cfg.budgets.sweep, q0.as_ref())?, q0))
}

fn sweep(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let (rep, _) = sweep_inner(cfg, rng)?;
    let mut out = Outcome::default();
    for r in rep.reports() {
        out.checks.push(Check::gate(r));
    }
    out.artifacts.insert("sweep.csv".into(), rep.to_csv()?);
    out.artifacts.insert(
        "sweep.json".into(),
        serde_json::to_string_pretty(&rep).map_err(|e| Error::Precondition(e.to_string()))?,
    );
    let series = vec![Series {
        name: "max ratio".into(),
        points: rep.p_grid.iter().cloned().zip(rep.max_ratio.iter().cloned()).collect(),
    }];
    let markers: Vec<Marker> = rep
        .endpoint
        .map(|e| Marker {
            x: e,
            label: format!("p = {e}"),
        })
        .into_iter()
        .collect();
    out.artifacts.insert(
        "sweep.svg".into(),
        render_svg(&format!("operator ratio, d = {}", rep.dim), &series, &markers)?,
    );
    Ok(out)
}

fn polygon(cfg: &ExperimentConfig) -> Result<Outcome> {
    let coeffs = CoefficientField::new(cfg.coefficients.clone(), 2, 1)?;
    let params = PolygonParams {
        levels: 4,
        spacing: 0.01,
        t_min: 0.02,
        density: 1.0,
        budget: cfg.budgets.polygon,
    };
    let mut out = Outcome::default();
    let square = Polygon::unit_square();
    let one = ConstantField(vec![c1(1.0)]);
    for r in bounded_domain_wrap(&square, &one, &coeffs, &cfg.sweep.p_grid, &params)? {
        // constants are solutions: the ratio is 1 up to rounding
        let exact = InequalityReport::new("square-constant", (r.ratio - 1.0).abs(), 1.0, 1e-6)
            .with("p", r.context["p"].clone())
            .with("ratio", r.ratio);
        out.checks.push(Check::gate(r));
        out.checks.push(Check::gate(exact));
    }
    let bump = BumpDatum::single([0.5, 0.0, 0.0], 0.3, vec![c1(1.0)]);
    for r in bounded_domain_refinement(&square, &bump, &coeffs, &[3.0], &params, 0.1)? {
        out.checks.push(Check::gate(r));
    }
    let ell = Polygon::l_shape();
    let corner = BumpDatum::single([1.0, 1.0, 0.0], 0.4, vec![c1(1.0)]);
    for r in bounded_domain_wrap(&ell, &corner, &coeffs, &[cfg.sweep.p0], &params)? {
        out.checks.push(Check::gate(r.with("polygon", "l-shape")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::parse(e.name()).unwrap(), e);
        }
        assert!(Experiment::parse("nope").is_err());
    }
}
