//! Complex coefficient tensors `a_ij^{αβ}` and drifts `b_j^{αβ}` for
//! divergence-form systems, with admissibility checks.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, Point};

pub type C64 = Complex64;

/// Builtin coefficient families, addressable by name from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Identity,
    /// `a = A + iB + C` with `A` real SPD (eigenvalues `1` and `ratio` rotated
    /// by `angle`), `B = imag * A` and `C` antisymmetric (`skew`); systems get
    /// an antisymmetric component coupling of strength `coupling`.
    Anisotropic {
        ratio: f64,
        angle: f64,
        imag: f64,
        skew: f64,
        coupling: f64,
    },
    /// Anisotropic tensor modulated by `1 + amplitude sin(2πx_1/λ) sin(2πx_d/λ)`.
    Oscillatory {
        ratio: f64,
        angle: f64,
        imag: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl CoefficientSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CoefficientSpec::Identity => "identity",
            CoefficientSpec::Anisotropic { .. } => "anisotropic",
            CoefficientSpec::Oscillatory { .. } => "oscillatory",
        }
    }

    /// A fixed complex anisotropic example used by tests and defaults.
    pub fn complex_example() -> Self {
        CoefficientSpec::Anisotropic {
            ratio: 0.5,
            angle: 0.4,
            imag: 0.3,
            skew: 0.2,
            coupling: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
enum Leading {
    Constant(Vec<C64>),
    Oscillatory {
        base: Vec<C64>,
        amplitude: f64,
        wavelength: f64,
    },
}

/// Drift `b_j^{αβ}(x) = ν δ(x) B_j^{αβ}` with `|B_j^{αβ}| ≤ 1`.
#[derive(Clone)]
struct Drift {
    nu: f64,
    pattern: Vec<C64>,
    domain: Arc<dyn Domain + Send + Sync>,
}

/// Coefficients of `L u = -div(a ∇u) + b·∇u` acting on `u: Ω → C^m`.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    m: usize,
    spec: CoefficientSpec,
    leading: Leading,
    drift: Option<Drift>,
    mu: f64,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("m", &self.m)
            .field("spec", &self.spec)
            .field("mu", &self.mu)
            .field("nu", &self.nu())
            .finish()
    }
}

fn rotation(dim: usize, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    if dim == 2 {
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    } else {
        // rotate in the (x1, x3) plane, then in (x1, x2)
        let r1 = [[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]];
        let r2 = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| r2[i][k] * r1[k][j]).sum();
            }
        }
        r
    }
}

fn anisotropic_tensor(dim: usize, m: usize, ratio: f64, angle: f64, imag: f64, skew: f64, coupling: f64) -> Vec<C64> {
    let r = rotation(dim, angle);
    let eig = [1.0, ratio, 0.5 * (1.0 + ratio)];
    let mut a = vec![[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            a[i][j] = (0..dim).map(|k| r[i][k] * eig[k] * r[j][k]).sum();
        }
    }
    let mut t = vec![C64::new(0.0, 0.0); dim * dim * m * m];
    for al in 0..m {
        for be in 0..m {
            for i in 0..dim {
                for j in 0..dim {
                    let mut v = C64::new(0.0, 0.0);
                    if al == be {
                        let anti = if i < j {
                            skew
                        } else if i > j {
                            -skew
                        } else {
                            0.0
                        };
                        v += C64::new(a[i][j] + anti, imag * a[i][j]);
                    } else if i == j {
                        // antisymmetric in (α, β): no contribution to Re(a ξ·ξ̄)
                        v += if al < be { coupling } else { -coupling };
                    }
                    t[((al * m + be) * dim + i) * dim + j] = v;
                }
            }
        }
    }
    t
}

impl CoefficientField {
    /// Builds the field for `dim` and `m` components; `μ` is certified from
    /// the tensor (minimum of the Hermitian-part eigenvalue and the inverse
    /// sup norm).
    pub fn new(spec: CoefficientSpec, dim: usize, m: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(invalid("dim", "only d = 2 and d = 3 are supported"));
        }
        if m == 0 {
            return Err(invalid("m", "system size must be at least 1"));
        }
        let leading = match &spec {
            CoefficientSpec::Identity => Leading::Constant(anisotropic_tensor(dim, m, 1.0, 0.0, 0.0, 0.0, 0.0)),
            &CoefficientSpec::Anisotropic {
                ratio,
                angle,
                imag,
                skew,
                coupling,
            } => {
                if !(ratio > 0.0) {
                    return Err(invalid("ratio", "anisotropy ratio must be positive"));
                }
                Leading::Constant(anisotropic_tensor(dim, m, ratio, angle, imag, skew, coupling))
            }
            &CoefficientSpec::Oscillatory {
                ratio,
                angle,
                imag,
                amplitude,
                wavelength,
            } => {
                if !(ratio > 0.0) || !(0.0..1.0).contains(&amplitude) || !(wavelength > 0.0) {
                    return Err(invalid(
                        "oscillatory",
                        "need ratio > 0, 0 <= amplitude < 1, wavelength > 0",
                    ));
                }
                Leading::Oscillatory {
                    base: anisotropic_tensor(dim, m, ratio, angle, imag, 0.0, 0.0),
                    amplitude,
                    wavelength,
                }
            }
        };
        let mut field = CoefficientField {
            dim,
            m,
            spec,
            leading,
            drift: None,
            mu: 0.0,
        };
        field.mu = field.certified_mu();
        if !(field.mu > 0.0) {
            return Err(Error::Precondition(format!(
                "coefficient family `{}` is not elliptic",
                field.spec.name()
            )));
        }
        Ok(field)
    }

    pub fn identity(dim: usize, m: usize) -> Self {
        Self::new(CoefficientSpec::Identity, dim, m).expect("identity is admissible")
    }

    /// Adds the drift `b = ν δ(x) B` for a fixed deterministic pattern `B`
    /// with entries of modulus at most one.
    pub fn with_drift(mut self, nu: f64, domain: Arc<dyn Domain + Send + Sync>) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(invalid("nu", "drift scale must be nonnegative"));
        }
        let (d, m) = (self.dim, self.m);
        let pattern = (0..m * m * d)
            .map(|k| {
                let t = 0.7 * k as f64 + 0.3;
                C64::from_polar(1.0, t) * (0.5 + 0.5 * (1.3 * t).cos().abs())
            })
            .collect();
        self.drift = Some(Drift {
            nu,
            pattern,
            domain,
        });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    /// Certified ellipticity constant.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.drift.as_ref().map_or(0.0, |d| d.nu)
    }

    pub fn has_drift(&self) -> bool {
        self.drift.as_ref().is_some_and(|d| d.nu > 0.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.leading, Leading::Constant(_))
    }

    /// True when the assembled matrix is Hermitian (Hermitian tensor, no drift).
    pub fn is_hermitian(&self) -> bool {
        if self.has_drift() {
            return false;
        }
        let t = match &self.leading {
            Leading::Constant(t) => t,
            Leading::Oscillatory { base, .. } => base,
        };
        let (d, m) = (self.dim, self.m);
        for al in 0..m {
            for be in 0..m {
                for i in 0..d {
                    for j in 0..d {
                        let x = t[((al * m + be) * d + i) * d + j];
                        let y = t[((be * m + al) * d + j) * d + i];
                        if (x - y.conj()).norm() > 1e-14 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// `a_ij^{αβ}(x)` at index `((α m + β) d + i) d + j`.
    pub fn leading_at(&self, x: &Point, out: &mut [C64]) {
        match &self.leading {
            Leading::Constant(t) => out.copy_from_slice(t),
            Leading::Oscillatory {
                base,
                amplitude,
                wavelength,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                let s = 1.0 + amplitude * (k * x[0]).sin() * (k * x[self.dim - 1]).sin();
                for (o, b) in out.iter_mut().zip(base) {
                    *o = b * s;
                }
            }
        }
    }

    /// `b_j^{αβ}(x)` at index `(α m + β) d + j`; false when there is no drift.
    pub fn drift_at(&self, x: &Point, out: &mut [C64]) -> bool {
        match &self.drift {
            Some(dr) if dr.nu > 0.0 => {
                let delta = dr.domain.distance_to_boundary(x).unwrap_or(0.0);
                for (o, p) in out.iter_mut().zip(&dr.pattern) {
                    *o = p * (dr.nu * delta);
                }
                true
            }
            _ => false,
        }
    }

    fn tensor_len(&self) -> usize {
        self.dim * self.dim * self.m * self.m
    }

    /// The matrix `K[(α,i),(β,j)] = a_ij^{αβ}` whose Hermitian part governs
    /// ellipticity.
    fn block_matrix(&self, t: &[C64]) -> DMatrix<C64> {
        let (d, m) = (self.dim, self.m);
        DMatrix::from_fn(d * m, d * m, |r, c| {
            let (al, i) = (r / d, r % d);
            let (be, j) = (c / d, c % d);
            t[((al * m + be) * d + i) * d + j]
        })
    }

    fn hermitian_min_eig(&self, t: &[C64]) -> f64 {
        let k = self.block_matrix(t);
        let h = (&k + k.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn certified_mu(&self) -> f64 {
        let (base, lo, hi) = match &self.leading {
            Leading::Constant(t) => (t, 1.0, 1.0),
            Leading::Oscillatory { base, amplitude, .. } => (base, 1.0 - amplitude, 1.0 + amplitude),
        };
        let ell = self.hermitian_min_eig(base) * lo;
        let sup = base.iter().map(|v| v.norm()).fold(0.0, f64::max) * hi;
        ell.min(1.0 / sup)
    }

    /// Samples boundedness, ellipticity and the drift bound at `samples`
    /// random points of `[-extent, extent]^d` (points outside `domain`
    /// skipped for the drift bound) with random complex `ξ`.
    pub fn check_admissible<D: Domain + ?Sized>(
        &self,
        domain: &D,
        extent: f64,
        samples: usize,
        seed: u64,
    ) -> Result<AdmissibilityReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, m) = (self.dim, self.m);
        let mut t = vec![C64::new(0.0, 0.0); self.tensor_len()];
        let mut b = vec![C64::new(0.0, 0.0); m * m * d];
        let mut worst_ellipticity = f64::INFINITY;
        let mut worst_bound: f64 = 0.0;
        let mut worst_drift: f64 = 0.0;
        let mut failures = Vec::new();
        for _ in 0..samples {
            let mut x = [0.0; 3];
            for c in 0..d {
                x[c] = rng.gen_range(-extent..extent);
            }
            self.leading_at(&x, &mut t);
            worst_bound = worst_bound.max(t.iter().map(|v| v.norm()).fold(0.0, f64::max));
            let xi: Vec<C64> = (0..d * m)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm2: f64 = xi.iter().map(|v| v.norm_sqr()).sum();
            let mut q = C64::new(0.0, 0.0);
            for al in 0..m {
                for be in 0..m {
                    for i in 0..d {
                        for j in 0..d {
                            q += t[((al * m + be) * d + i) * d + j] * xi[be * d + j] * xi[al * d + i].conj();
                        }
                    }
                }
            }
            worst_ellipticity = worst_ellipticity.min(q.re / norm2);
            if domain.contains(&x) && self.drift_at(&x, &mut b) {
                let delta = domain.distance_to_boundary(&x)?;
                let bmax = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if delta > 0.0 {
                    worst_drift = worst_drift.max(bmax / delta);
                }
            }
        }
        let tol = 1e-12;
        if worst_ellipticity < self.mu - tol {
            failures.push(format!(
                "ellipticity {worst_ellipticity:.6} below mu = {:.6}",
                self.mu
            ));
        }
        if worst_bound > 1.0 / self.mu + tol {
            failures.push(format!("|a| = {worst_bound:.6} exceeds 1/mu = {:.6}", 1.0 / self.mu));
        }
        if worst_drift > self.nu() + tol {
            failures.push(format!("|b|/delta = {worst_drift:.6} exceeds nu = {}", self.nu()));
        }
        if !failures.is_empty() {
            return Err(Error::Precondition(failures.join("; ")));
        }
        Ok(AdmissibilityReport {
            mu: self.mu,
            nu: self.nu(),
            worst_ellipticity,
            worst_bound,
            worst_drift_ratio: worst_drift,
            samples,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub mu: f64,
    pub nu: f64,
    pub worst_ellipticity: f64,
    pub worst_bound: f64,
    pub worst_drift_ratio: f64,
    pub samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraphDomain;

    #[test]
    fn identity_is_hermitian_with_unit_mu() {
        let c = CoefficientField::identity(3, 2);
        assert!(c.is_hermitian());
        assert!((c.mu() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complex_family_is_admissible_and_not_hermitian() {
        let dom = GraphDomain::flat(2, 2.0).unwrap();
        for m in [1, 2] {
            let c = CoefficientField::new(CoefficientSpec::complex_example(), 2, m).unwrap();
            assert!(!c.is_hermitian());
            assert!(c.mu() > 0.2, "{}", c.mu());
            c.check_admissible(&dom, 2.0, 10_000, 1).unwrap();
        }
    }

    #[test]
    fn drift_respects_distance_bound() {
        let dom = Arc::new(GraphDomain::sawtooth(1.0, 1.0, 3.0, 3.0).unwrap());
        let c = CoefficientField::identity(2, 1).with_drift(0.1, dom.clone()).unwrap();
        let rep = c.check_admissible(dom.as_ref(), 2.0, 10_000, 2).unwrap();
        assert!(rep.worst_drift_ratio <= 0.1 + 1e-12);
        assert!(rep.worst_drift_ratio > 0.05);
    }

    #[test]
    fn oscillatory_mu_accounts_for_modulation() {
        let spec = CoefficientSpec::Oscillatory {
            ratio: 0.5,
            angle: 0.0,
            imag: 0.0,
            amplitude: 0.5,
            wavelength: 0.25,
        };
        let c = CoefficientField::new(spec, 2, 1).unwrap();
        assert!((c.mu() - 0.25).abs() < 1e-12);
        let dom = GraphDomain::flat(2, 1.0).unwrap();
        c.check_admissible(&dom, 1.0, 10_000, 3).unwrap();
    }
}
