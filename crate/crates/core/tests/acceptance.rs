//! Desk-scale acceptance suite. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde_json::Value;

use nta_core::coefficients::{CoefficientField, CoefficientSpec};
use nta_core::config::{parse_config, ExperimentConfig};
use nta_core::experiment::{run, Experiment, RunOutput};
use nta_core::fields::VectorFunction;
use nta_core::geometry::{GraphDomain, Point};
use nta_core::mesh::{graph_box_mesh, GraphMeshSpec};
use nta_core::solver::{l2_error, solve_dirichlet_with_source, ArtificialBc};
use nta_core::sparse::SolverOptions;

type Outcome = Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    parse_config(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run_config(name: &str, exp: Experiment) -> Result<RunOutput, String> {
    let cfg = config(name);
    let seed = cfg.sweep.seed;
    run(&cfg, exp, seed).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ctx_f64(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64)
}

fn geometry() -> Outcome {
    let out = run_config("geometry.toml", Experiment::Geometry)?;
    let pairs = out.named("ball-in-double-cone");
    ensure(pairs.len() == 3, || format!("{} containment suites", pairs.len()))?;
    for r in &pairs {
        ensure(r.right == 500.0 && r.left == 0.0, || format!("{r:?}"))?;
    }
    for name in ["distance-below-gap", "gap-below-scaled-distance"] {
        let reps = out.named(name);
        ensure(reps.len() == 3, || format!("{name}: {} domains", reps.len()))?;
        for r in reps {
            ensure(r.pass && ctx_f64(r.context.get("points")) == Some(1e4), || format!("{r:?}"))?;
        }
    }
    ensure(out.manifest.pass, || "manifest fails".into())?;
    Ok("3 domains x 500 pairs, 3 x 10^4 distance points".into())
}

fn hardy() -> Outcome {
    let out = run_config("hardy-2d.toml", Experiment::Hardy)?;
    let reps = out.named("hardy");
    ensure(reps.len() == 4, || format!("{} checks", reps.len()))?;
    let mut worst: f64 = 0.0;
    for r in &reps {
        let s = ctx_f64(r.context.get("s")).ok_or("missing s")?;
        // u = t^s: |u|²/t² = t^{2s-2} and |∇u|² = s² t^{2s-2}
        let expected = 1.0 / (s * s);
        let err = (r.ratio - expected).abs() / expected;
        worst = worst.max(err);
        ensure(err < 0.02, || format!("s = {s}: ratio {} vs {expected}", r.ratio))?;
        ensure(r.ratio <= 4.0 * 1.05, || format!("s = {s}: ratio {}", r.ratio))?;
    }
    let other = run_config("hardy-sawtooth.toml", Experiment::Hardy)?;
    for r in other.named("hardy") {
        ensure(r.ratio <= 4.0 * 1.05 && r.pass, || format!("sawtooth: {r:?}"))?;
    }
    Ok(format!("sharp family within {:.2}% of 1/s^2", 100.0 * worst))
}

/// `u = e^{i k x_1} sin(x_d + φ) (cos(c x_2) in d = 3)`, written out here
/// independently of the library's manufactured fields.
struct Wave {
    dim: usize,
}

const K: f64 = 1.3;
const PHI: f64 = 0.4;
const CY: f64 = 0.8;

impl Wave {
    fn value(&self, x: &Point) -> C64 {
        let d = self.dim;
        let lateral = if d == 3 { (CY * x[1]).cos() } else { 1.0 };
        C64::from_polar(1.0, K * x[0]) * (x[d - 1] + PHI).sin() * lateral
    }

    fn gradient(&self, x: &Point) -> [C64; 3] {
        let d = self.dim;
        let e = C64::from_polar(1.0, K * x[0]);
        let (s, c) = (x[d - 1] + PHI).sin_cos();
        let (ly, dly) = if d == 3 {
            ((CY * x[1]).cos(), -CY * (CY * x[1]).sin())
        } else {
            (1.0, 0.0)
        };
        let mut g = [C64::new(0.0, 0.0); 3];
        g[0] = C64::new(0.0, K) * e * s * ly;
        if d == 3 {
            g[1] = e * s * dly;
        }
        g[d - 1] = e * c * ly;
        g
    }
}

impl VectorFunction for Wave {
    fn components(&self) -> usize {
        1
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        out[0] = self.value(x);
    }
}

/// `-div(a∇u) + b·∇u` with the divergence taken by central differences.
struct Source<'a> {
    wave: &'a Wave,
    coeffs: &'a CoefficientField,
}

impl Source<'_> {
    fn flux(&self, x: &Point, i: usize) -> C64 {
        let d = self.wave.dim;
        let mut a = vec![C64::new(0.0, 0.0); d * d];
        self.coeffs.leading_at(x, &mut a);
        let g = self.wave.gradient(x);
        (0..d).map(|j| a[i * d + j] * g[j]).sum()
    }
}

impl VectorFunction for Source<'_> {
    fn components(&self) -> usize {
        1
    }

    fn eval(&self, x: &Point, out: &mut [C64]) {
        let d = self.wave.dim;
        let eps = 1e-4;
        let mut s = C64::new(0.0, 0.0);
        for i in 0..d {
            let (mut xp, mut xm) = (*x, *x);
            xp[i] += eps;
            xm[i] -= eps;
            s -= (self.flux(&xp, i) - self.flux(&xm, i)) / (2.0 * eps);
        }
        let mut b = vec![C64::new(0.0, 0.0); d];
        if self.coeffs.drift_at(x, &mut b) {
            let g = self.wave.gradient(x);
            s += (0..d).map(|i| b[i] * g[i]).sum::<C64>();
        }
        out[0] = s;
    }
}

fn orders(dim: usize, spec: CoefficientSpec) -> Result<Vec<f64>, String> {
    let dom = if dim == 2 {
        GraphDomain::sawtooth(0.5, 1.0, 1.0, 1.0)
    } else {
        GraphDomain::flat(3, 1.0)
    }
    .map_err(|e| e.to_string())?;
    let coeffs = CoefficientField::new(spec, dim, 1).map_err(|e| e.to_string())?;
    let wave = Wave { dim };
    let src = Source {
        wave: &wave,
        coeffs: &coeffs,
    };
    let exact: Arc<dyn VectorFunction> = Arc::new(Wave { dim });
    let hs: &[f64] = if dim == 2 {
        &[0.2, 0.1, 0.05, 0.025]
    } else {
        &[0.5, 0.25, 0.125, 0.0625]
    };
    let mut errs = Vec::new();
    for &h in hs {
        let mesh = Arc::new(graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, h)).map_err(|e| e.to_string())?);
        let sol = solve_dirichlet_with_source(
            mesh,
            &coeffs,
            &wave,
            &ArtificialBc::Exact(exact.clone()),
            Some(&src),
            &SolverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        errs.push(l2_error(&sol, &wave));
    }
    Ok(errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

fn solver() -> Outcome {
    let aniso = CoefficientSpec::Anisotropic {
        ratio: 3.0,
        angle: 0.4,
        imag: 0.3,
        skew: 0.2,
        coupling: 0.0,
    };
    let mut lines = Vec::new();
    for dim in [2, 3] {
        for (name, spec) in [("laplace", CoefficientSpec::Identity), ("anisotropic", aniso.clone())] {
            let o = orders(dim, spec)?;
            let min = o.iter().cloned().fold(f64::INFINITY, f64::min);
            ensure(min >= 1.8, || format!("d = {dim} {name}: orders {o:?}"))?;
            lines.push(format!("d{dim} {name} {min:.2}"));
        }
    }
    Ok(format!("min orders: {}", lines.join(", ")))
}

fn cacciopoli() -> Outcome {
    let out = run_config("cacciopoli-2d.toml", Experiment::Cacciopoli)?;
    let reps = out.named("cacciopoli");
    let gap = reps
        .iter()
        .find(|r| r.context.get("field").and_then(Value::as_str) == Some("gap"))
        .ok_or("no gap check")?;
    // u = x_2 on half-disks: (π r²/2) / (r^{-2} · (π/2)(2r)^4/4)
    let r: f64 = 0.5;
    let expected = (std::f64::consts::PI * r * r / 2.0) / (r.powi(-2) * std::f64::consts::FRAC_PI_2 * (2.0 * r).powi(4) / 4.0);
    ensure((gap.ratio - expected).abs() <= 0.05 * expected, || format!("gap ratio {}", gap.ratio))?;
    let stab = out.named("cacciopoli-scales");
    ensure(stab.len() == 3, || format!("{} families", stab.len()))?;
    let mut worst: f64 = 0.0;
    for s in &stab {
        worst = worst.max(s.ratio);
        ensure(s.pass && s.ratio <= 2.0, || format!("{s:?}"))?;
    }
    ensure(out.manifest.pass, || "manifest fails".into())?;
    Ok(format!("half-disk ratio {:.4}, worst scale spread {worst:.3}", gap.ratio))
}

fn reverse_holder() -> Outcome {
    let mut msg = Vec::new();
    for (file, dim) in [("reverse-holder-2d.toml", 2), ("reverse-holder-3d.toml", 3)] {
        let out = run_config(file, Experiment::ReverseHolder)?;
        let reps = out.named("reverse-holder");
        ensure(reps.len() == 9, || format!("d = {dim}: {} checks", reps.len()))?;
        for r in &reps {
            ensure(r.ratio.is_finite() && !r.vacuous, || format!("d = {dim}: {r:?}"))?;
            ensure(ctx_f64(r.context.get("q")) == Some(4.0), || format!("d = {dim}: q {:?}", r.context.get("q")))?;
        }
        let stab = out.named("reverse-holder-scales");
        ensure(stab.len() == 3, || format!("d = {dim}: {} families", stab.len()))?;
        let worst = stab.iter().map(|s| s.ratio).fold(0.0, f64::max);
        ensure(worst <= 2.0, || format!("d = {dim}: scale spread {worst}"))?;
        ensure(out.manifest.pass, || format!("d = {dim}: manifest fails"))?;
        msg.push(format!("d{dim} spread {worst:.3}"));
    }
    Ok(msg.join(", "))
}

fn extrapolation() -> Outcome {
    let out = run_config("extrapolate-2d.toml", Experiment::Extrapolate)?;
    let dom = out.named("split-domination");
    ensure(!dom.is_empty(), || "no domination checks".into())?;
    for r in &dom {
        ensure(r.pass && r.ratio <= 1.0 + 1e-12, || format!("{r:?}"))?;
    }
    let scales: std::collections::BTreeSet<i64> = dom
        .iter()
        .filter_map(|r| r.context.get("scale").and_then(Value::as_i64))
        .collect();
    ensure(scales.len() == 3, || format!("{} cube scales", scales.len()))?;
    for name in ["split-remainder", "split-local"] {
        for r in out.named(name) {
            ensure(r.pass, || format!("{r:?}"))?;
        }
        let stab = out.named(&format!("{name}-scales"));
        ensure(stab.len() == 1 && stab[0].ratio <= 2.0, || format!("{name}: {stab:?}"))?;
    }
    let doubling = out.named("extrapolation-doubling");
    ensure(!doubling.is_empty(), || "no doubling checks".into())?;
    let worst = doubling.iter().map(|r| r.ratio).fold(0.0, f64::max);
    ensure(worst <= 2.0 && doubling.iter().all(|r| r.pass), || format!("doubling {worst}"))?;
    ensure(out.manifest.pass, || "manifest fails".into())?;
    Ok(format!("{} cubes, doubling spread {worst:.3}", dom.len()))
}

fn sweep_json(out: &RunOutput) -> Result<Value, String> {
    let text = out.artifacts.get("sweep.json").ok_or("no sweep.json")?;
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn sweep() -> Outcome {
    let two = run_config("sweep-2d.toml", Experiment::Sweep)?;
    let j = sweep_json(&two)?;
    let ps: Vec<f64> = serde_json::from_value(j["p_grid"].clone()).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = serde_json::from_value(j["max_ratio"].clone()).map_err(|e| e.to_string())?;
    ensure(ps == [2.0, 3.0, 4.0, 8.0, 16.0], || format!("p grid {ps:?}"))?;
    ensure(ratios.iter().all(|r| r.is_finite() && *r > 0.0), || format!("ratios {ratios:?}"))?;
    // one row of ratios per datum
    let family = j["ratios"].as_array().map_or(0, Vec::len);
    ensure(family == 10, || format!("family of {family}"))?;
    ensure(two.artifacts.contains_key("sweep.csv") && two.artifacts.contains_key("sweep.svg"), || "missing artifacts".into())?;

    let three = run_config("sweep-3d.toml", Experiment::Sweep)?;
    let j3 = sweep_json(&three)?;
    let r3: Vec<f64> = serde_json::from_value(j3["max_ratio"].clone()).map_err(|e| e.to_string())?;
    ensure(r3.len() == 3 && r3.iter().all(|r| r.is_finite()), || format!("d = 3 ratios {r3:?}"))?;
    ensure(j3["endpoint"].as_f64() == Some(4.0), || format!("endpoint {}", j3["endpoint"]))?;
    let svg = three.artifacts.get("sweep.svg").ok_or("no d = 3 plot")?;
    ensure(svg.contains("stroke-dasharray") && svg.contains("p = 4"), || "endpoint marker missing".into())?;
    Ok(format!("d2 max ratio {:.3}, d3 max ratio {:.3}", ratios.iter().cloned().fold(0.0, f64::max), r3.iter().cloned().fold(0.0, f64::max)))
}

fn polygon() -> Outcome {
    let cfg = config("polygon.toml");
    let out = run(&cfg, Experiment::Polygon, 0).map_err(|e| e.to_string())?;
    let exact = out.named("square-constant");
    ensure(exact.len() == cfg.sweep.p_grid.len(), || format!("{} exponents", exact.len()))?;
    for r in &exact {
        let ratio = ctx_f64(r.context.get("ratio")).ok_or("missing ratio")?;
        ensure((ratio - 1.0).abs() <= 1e-6, || format!("square ratio {ratio}"))?;
    }
    let refine = out.named("bounded-domain-refinement");
    ensure(refine.len() == 1 && refine[0].pass && refine[0].ratio <= 1.1, || format!("{refine:?}"))?;
    Ok(format!("refinement change {:.2}%", 100.0 * (refine[0].ratio - 1.0).abs()))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_nta-verify");
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/sweep-quick.toml");
    let tmp = std::env::temp_dir().join(format!("nta-determinism-{}", std::process::id()));
    let mut dirs = Vec::new();
    for k in 0..2 {
        let dir = tmp.join(k.to_string());
        let status = Command::new(bin)
            .args(["run", "sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .args(["--seed", "42"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || format!("exit {:?}", status.status.code()))?;
        dirs.push(dir);
    }
    let mut compared = 0;
    for name in ["manifest.json", "reports.json", "reports.csv", "sweep.csv", "sweep.json", "sweep.svg"] {
        let a = std::fs::read(dirs[0].join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b, || format!("{name} differs"))?;
        compared += 1;
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Ok(format!("{compared} artifacts byte-identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("geometry", geometry),
        ("hardy", hardy),
        ("solver convergence", solver),
        ("cacciopoli", cacciopoli),
        ("reverse holder", reverse_holder),
        ("extrapolation", extrapolation),
        ("p-sweep", sweep),
        ("bounded domain", polygon),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("criterion {} {name}: PASS ({msg}) [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({msg}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
