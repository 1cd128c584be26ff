//! Experiment configuration: `key = value` lines under `[section]` headers.
//! Every field is optional; validation reports all problems at once.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{CoefficientField, CoefficientSpec};
use crate::error::{Error, Result};
use crate::extrapolation::{default_alpha, default_gamma, DEFAULT_BETA};
use crate::geometry::{default_aperture, fmt_num, ConeSpec, GraphDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Flat,
    Tilted,
    Sawtooth,
    Random,
    Ridge,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: Option<DomainKind>,
    dim: Option<usize>,
    lipschitz: Option<f64>,
    truncation: Option<f64>,
    mesh_h: Option<f64>,
    period: Option<f64>,
    extent: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCone {
    aperture: Option<f64>,
    height: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudgets {
    kappa: Option<f64>,
    hardy_tol: Option<f64>,
    reverse_holder: Option<f64>,
    sobolev: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    extrapolation: Option<f64>,
    sweep: Option<f64>,
    polygon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    p0: Option<f64>,
    p_grid: Option<Vec<f64>>,
    p1: Option<f64>,
    q: Option<f64>,
    q_grid: Option<Vec<f64>>,
    lower: Option<f64>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    scales: Option<usize>,
    positions: Option<usize>,
    family: Option<usize>,
    density: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    jobs: Option<usize>,
    output: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    domain: RawDomain,
    coefficients: Option<toml::Value>,
    #[serde(default)]
    cone: RawCone,
    #[serde(default)]
    budgets: RawBudgets,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub dim: usize,
    /// Declared Lipschitz constant `M`.
    pub lipschitz: f64,
    pub truncation: f64,
    pub mesh_h: f64,
    pub period: f64,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Budgets {
    pub kappa: f64,
    pub hardy_tol: f64,
    pub reverse_holder: f64,
    pub sobolev: f64,
    pub c1: f64,
    pub c2: f64,
    pub extrapolation: f64,
    pub sweep: f64,
    pub polygon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub p0: f64,
    pub p_grid: Vec<f64>,
    pub p1: f64,
    /// Base reverse Hölder exponent.
    pub q: f64,
    pub q_grid: Vec<f64>,
    /// Lower exponent of the reverse Hölder averages (1, or 2).
    pub lower: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub scales: usize,
    pub positions: usize,
    pub family: usize,
    pub density: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub coefficients: CoefficientSpec,
    pub cone: ConeSpec,
    pub budgets: Budgets,
    pub sweep: SweepConfig,
    pub jobs: usize,
    pub output: Option<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let mut errs = Vec::new();
    let d = &raw.domain;
    let dim = d.dim.unwrap_or(2);
    if !(dim == 2 || dim == 3) {
        errs.push(format!("domain.dim: must be 2 or 3 (got {dim})"));
    }
    let kind = d.kind.unwrap_or(DomainKind::Flat);
    let m = d.lipschitz.unwrap_or(match kind {
        DomainKind::Flat => 0.0,
        _ => 0.5,
    });
    if !(m >= 0.0 && m.is_finite()) {
        errs.push("domain.lipschitz: must be finite and nonnegative".into());
    }
    if kind == DomainKind::Flat && m != 0.0 {
        errs.push("domain.lipschitz: a flat domain has M = 0".into());
    }
    match (kind, dim) {
        (DomainKind::Ridge, 2) => errs.push("domain.kind: ridge profiles need dim = 3".into()),
        (DomainKind::Tilted | DomainKind::Sawtooth | DomainKind::Random, 3) => {
            errs.push("domain.kind: this profile needs dim = 2".into())
        }
        _ => {}
    }
    let truncation = d.truncation.unwrap_or(8.0);
    if !(truncation > 0.0 && truncation.is_finite()) {
        errs.push("domain.truncation: must be positive".into());
    }
    let mesh_h = d.mesh_h.unwrap_or(truncation / 40.0);
    if !(mesh_h > 0.0 && mesh_h < truncation / 4.0) {
        errs.push("domain.mesh_h: must lie in (0, R_trunc/4)".into());
    }
    let period = d.period.unwrap_or(1.0);
    if !(period > 0.0) {
        errs.push("domain.period: must be positive".into());
    }
    let extent = d.extent.unwrap_or(truncation);
    if !(extent > 0.0) {
        errs.push("domain.extent: must be positive".into());
    }

    let coefficients = match raw.coefficients {
        None => CoefficientSpec::Identity,
        Some(v) => match v.try_into::<CoefficientSpec>() {
            Ok(s) => s,
            Err(e) => {
                errs.push(format!("coefficients: {}", e.message()));
                CoefficientSpec::Identity
            }
        },
    };
    if dim == 2 || dim == 3 {
        if let Err(e) = CoefficientField::new(coefficients.clone(), dim, 1) {
            errs.push(format!("coefficients: {e}"));
        }
    }

    let aperture = raw.cone.aperture.unwrap_or(default_aperture(m));
    if !(aperture > 1.0 + 2.0 * m) {
        errs.push(format!("cone.aperture: aperture must exceed 1+2M = {}", fmt_num(1.0 + 2.0 * m)));
    }
    if let Some(h) = raw.cone.height {
        if !(h > 0.0 && h < truncation / 10.0) {
            errs.push("cone.height: must lie in (0, R_trunc/10)".into());
        }
    }

    let b = &raw.budgets;
    let budgets = Budgets {
        kappa: b.kappa.unwrap_or(1.0),
        hardy_tol: b.hardy_tol.unwrap_or(0.05),
        reverse_holder: b.reverse_holder.unwrap_or(4.0),
        sobolev: b.sobolev.unwrap_or(10.0),
        c1: b.c1.unwrap_or(20.0),
        c2: b.c2.unwrap_or(20.0),
        extrapolation: b.extrapolation.unwrap_or(10.0),
        sweep: b.sweep.unwrap_or(20.0),
        polygon: b.polygon.unwrap_or(20.0),
    };
    for (name, v) in [
        ("kappa", budgets.kappa),
        ("reverse_holder", budgets.reverse_holder),
        ("sobolev", budgets.sobolev),
        ("c1", budgets.c1),
        ("c2", budgets.c2),
        ("extrapolation", budgets.extrapolation),
        ("sweep", budgets.sweep),
        ("polygon", budgets.polygon),
    ] {
        if !(v > 0.0) {
            errs.push(format!("budgets.{name}: must be positive"));
        }
    }
    if !(budgets.hardy_tol >= 0.0 && budgets.hardy_tol < 1.0) {
        errs.push("budgets.hardy_tol: must lie in [0, 1)".into());
    }

    let s = &raw.sweep;
    let p_grid = s.p_grid.clone().unwrap_or_else(|| match dim {
        3 => vec![2.0, 3.0, 3.9],
        _ => vec![2.0, 3.0, 4.0, 8.0, 16.0],
    });
    let p0 = s.p0.unwrap_or(p_grid.first().copied().unwrap_or(2.0));
    check_grid("sweep.p_grid", &p_grid, &mut errs);
    if !(p0 >= 1.0) {
        errs.push("sweep.p0: must be at least 1".into());
    }
    if p_grid.first().is_some_and(|&p| p < p0) {
        errs.push("sweep.p_grid: entries must be at least p0".into());
    }
    let q = s.q.unwrap_or(4.0);
    let q_grid = s.q_grid.clone().unwrap_or_else(|| match dim {
        3 => vec![4.0, 4.1, 4.25, 4.5],
        _ => vec![3.0, 4.0, 6.0, 8.0],
    });
    check_grid("sweep.q_grid", &q_grid, &mut errs);
    let lower = s.lower.unwrap_or(1.0);
    if !(lower == 1.0 || lower == 2.0) {
        errs.push("sweep.lower: must be 1 or 2".into());
    }
    if !(q > lower) {
        errs.push("sweep.q: must exceed the lower exponent".into());
    }
    let p1 = s.p1.unwrap_or(if dim == 3 { 4.0 } else { 8.0 });
    if !(p1 > p0) {
        errs.push("sweep.p1: must exceed p0".into());
    }
    let gamma = s.gamma.unwrap_or(default_gamma(dim.clamp(2, 3)));
    let lateral = (dim.clamp(2, 3) - 1) as f64;
    if !(gamma > lateral.sqrt()) {
        errs.push(format!("sweep.gamma: must exceed sqrt(d-1) = {}", fmt_num(lateral.sqrt())));
    }
    let alpha = s.alpha.unwrap_or(default_alpha(gamma));
    if !(alpha >= default_alpha(gamma) * (1.0 - 1e-12)) {
        errs.push("sweep.alpha: alpha Q must contain the 2 gamma r ball (alpha >= 4 gamma)".into());
    }
    let beta = s.beta.unwrap_or(DEFAULT_BETA);
    if !(beta > 0.0 && beta < 1.0) {
        errs.push("sweep.beta: must lie in (0, 1)".into());
    }
    let scales = s.scales.unwrap_or(3);
    if scales == 0 {
        errs.push("sweep.scales: must be at least 1".into());
    }
    let positions = s.positions.unwrap_or(3);
    if !(1..=9).contains(&positions) {
        errs.push("sweep.positions: must lie in 1..=9".into());
    }
    let family = s.family.unwrap_or(10);
    if family == 0 {
        errs.push("sweep.family: data family is empty".into());
    }
    let density = s.density.unwrap_or(2.0);
    if !(density >= 1.0) {
        errs.push("sweep.density: must be at least 1".into());
    }
    let jobs = raw.run.jobs.unwrap_or(0);

    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    Ok(ExperimentConfig {
        domain: DomainConfig {
            kind,
            dim,
            lipschitz: m,
            truncation,
            mesh_h,
            period,
            extent,
        },
        coefficients,
        cone: ConeSpec {
            aperture,
            height: raw.cone.height,
        },
        budgets,
        sweep: SweepConfig {
            p0,
            p_grid,
            p1,
            q,
            q_grid,
            lower,
            gamma,
            alpha,
            beta,
            scales,
            positions,
            family,
            density,
            seed: s.seed.unwrap_or(0),
        },
        jobs,
        output: raw.run.output,
    })
}

fn check_grid(name: &str, grid: &[f64], errs: &mut Vec<String>) {
    if grid.is_empty() {
        errs.push(format!("{name}: grid is empty"));
    } else if grid.windows(2).any(|w| !(w[1] > w[0])) {
        errs.push(format!("{name}: grid not increasing"));
    } else if grid.iter().any(|p| !(p.is_finite() && *p >= 1.0)) {
        errs.push(format!("{name}: exponents must be finite and at least 1"));
    }
}

impl ExperimentConfig {
    /// The configured graph domain; its certified slope may not exceed `M`.
    pub fn build_domain(&self) -> Result<GraphDomain> {
        let d = &self.domain;
        let dom = match d.kind {
            DomainKind::Flat => GraphDomain::flat(d.dim, d.truncation)?,
            DomainKind::Tilted => GraphDomain::tilted(d.lipschitz, d.extent, d.truncation)?,
            DomainKind::Sawtooth => GraphDomain::sawtooth(d.lipschitz, d.period, d.extent, d.truncation)?,
            DomainKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.sweep.seed);
                GraphDomain::random_piecewise_linear(d.lipschitz, d.period, d.extent, d.truncation, &mut rng)?
            }
            DomainKind::Ridge => {
                GraphDomain::ridge_grid(d.lipschitz / 2f64.sqrt(), d.period, d.extent, d.truncation)?
            }
        };
        if dom.lipschitz() > d.lipschitz + 1e-9 {
            return Err(Error::Validation(vec![format!(
                "domain.lipschitz: profile slope {} exceeds the declared M = {}",
                dom.lipschitz(),
                d.lipschitz
            )]));
        }
        Ok(dom)
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        CoefficientField::new(self.coefficients.clone(), self.domain.dim, 1)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config_str("[domain]\nkind = \"sawtooth\"\nlipschitz = 0.5\n").unwrap();
        assert_eq!(c.cone.aperture, 4.0);
        assert!((c.sweep.gamma - 1.05).abs() < 1e-15);
        assert!((c.sweep.alpha - 4.2).abs() < 1e-12);
        assert_eq!(c.sweep.p_grid, vec![2.0, 3.0, 4.0, 8.0, 16.0]);
        assert_eq!(c.build_domain().unwrap().lipschitz(), 0.5);
        let empty = parse_config_str("").unwrap();
        assert_eq!(empty.domain.kind, DomainKind::Flat);
        assert_eq!(empty.coefficients, CoefficientSpec::Identity);
    }

    #[test]
    fn validation_collects_every_problem() {
        let text = "[domain]\nkind = \"sawtooth\"\nlipschitz = 0.5\n[cone]\naperture = 1.0\n[sweep]\np_grid = [4.0, 3.0]\n";
        match parse_config_str(text) {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("aperture must exceed 1+2M = 2")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("grid not increasing")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_lines() {
        match parse_config_str("[domain]\ndim = 2\nmesh_h = = 3\n") {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_config_str("[domain]\n\nbogus = 1\n") {
            Err(Error::ConfigParse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coefficient_sections_and_hash() {
        let text = "[coefficients]\nfamily = \"anisotropic\"\nratio = 0.5\nangle = 0.4\nimag = 0.3\nskew = 0.2\ncoupling = 0.0\n";
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.coefficients.name(), "anisotropic");
        assert_eq!(c.hash(), parse_config_str(text).unwrap().hash());
        assert_ne!(c.hash(), parse_config_str("").unwrap().hash());
        assert!(parse_config_str("[coefficients]\nfamily = \"nope\"\n").is_err());
    }
}
