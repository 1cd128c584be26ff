//! Degree-1 Galerkin discretization of `-div(a∇u) + b·∇u = f` with
//! Dirichlet data, and the resulting discrete solutions.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::fields::VectorFunction;
use crate::geometry::Point;
use crate::mesh::{Mesh, VertexKind};
use crate::quadrature::simplex_rule;
use crate::sparse::{self, CsrMatrix, SolveStats, SolverOptions};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Full (boundary rows included) system over all `n_vertices * m` unknowns,
/// ordered `vertex * m + component`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<C64>,
    pub m: usize,
}

/// Assembles the sesquilinear form
/// `∫ a_ij^{αβ} ∂_j u^β conj(∂_i φ^α) + ∫ b_j^{αβ} ∂_j u^β conj(φ^α)` and, when
/// given, the load `∫ f^α conj(φ^α)`.
pub fn assemble(mesh: &Mesh, coeffs: &CoefficientField, source: Option<&dyn VectorFunction>) -> Result<LinearSystem> {
    let d = mesh.dim();
    if coeffs.dim() != d {
        return Err(Error::Precondition(format!(
            "coefficients are {}-dimensional, mesh is {d}-dimensional",
            coeffs.dim()
        )));
    }
    let m = coeffs.components();
    if let Some(f) = source {
        if f.components() != m {
            return Err(Error::Precondition("source has the wrong number of components".into()));
        }
    }
    let n = mesh.num_vertices() * m;
    let rule = simplex_rule(d);
    let nl = d + 1;
    let quadrature_needed = !coeffs.is_constant() || coeffs.has_drift() || source.is_some();
    let chunks: Vec<(Vec<(usize, usize, C64)>, Vec<(usize, C64)>)> = (0..mesh.num_simplices())
        .into_par_iter()
        .chunks(512)
        .map(|ks| {
            let mut trip = Vec::with_capacity(ks.len() * nl * nl * m * m);
            let mut load = Vec::new();
            let mut a = vec![ZERO; d * d * m * m];
            let mut b = vec![ZERO; d * m * m];
            let mut fv = vec![ZERO; m];
            let mut local = vec![ZERO; nl * nl * m * m];
            for k in ks {
                let geo = mesh.geometry(k);
                let verts = mesh.simplex(k);
                local.iter_mut().for_each(|v| *v = ZERO);
                let add_leading = |a: &[C64], w: f64, local: &mut [C64]| {
                    for p in 0..nl {
                        for q in 0..nl {
                            for al in 0..m {
                                for be in 0..m {
                                    let mut s = ZERO;
                                    for i in 0..d {
                                        for j in 0..d {
                                            s += a[((al * m + be) * d + i) * d + j]
                                                * (geo.grads[q][j] * geo.grads[p][i]);
                                        }
                                    }
                                    local[((p * m + al) * nl + q) * m + be] += s * w;
                                }
                            }
                        }
                    }
                };
                if !quadrature_needed {
                    coeffs.leading_at(&mesh.vertices()[verts[0]], &mut a);
                    add_leading(&a, geo.volume, &mut local);
                } else {
                    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
                        let x = mesh.point_at(k, bary);
                        let wv = w * geo.volume;
                        if !coeffs.is_constant() || coeffs.has_drift() {
                            coeffs.leading_at(&x, &mut a);
                            add_leading(&a, wv, &mut local);
                            if coeffs.drift_at(&x, &mut b) {
                                for p in 0..nl {
                                    for q in 0..nl {
                                        for al in 0..m {
                                            for be in 0..m {
                                                let mut s = ZERO;
                                                for j in 0..d {
                                                    s += b[(al * m + be) * d + j] * geo.grads[q][j];
                                                }
                                                local[((p * m + al) * nl + q) * m + be] += s * (bary[p] * wv);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        if let Some(f) = source {
                            f.eval(&x, &mut fv);
                            for p in 0..nl {
                                for al in 0..m {
                                    load.push((verts[p] * m + al, fv[al] * (bary[p] * wv)));
                                }
                            }
                        }
                    }
                    if coeffs.is_constant() && !coeffs.has_drift() {
                        coeffs.leading_at(&mesh.vertices()[verts[0]], &mut a);
                        add_leading(&a, geo.volume, &mut local);
                    }
                }
                for p in 0..nl {
                    for al in 0..m {
                        for q in 0..nl {
                            for be in 0..m {
                                trip.push((
                                    verts[p] * m + al,
                                    verts[q] * m + be,
                                    local[((p * m + al) * nl + q) * m + be],
                                ));
                            }
                        }
                    }
                }
            }
            (trip, load)
        })
        .collect();
    let total: usize = chunks.iter().map(|c| c.0.len()).sum();
    let mut triplets = Vec::with_capacity(total);
    let mut rhs = vec![ZERO; n];
    for (t, l) in chunks {
        triplets.extend(t);
        for (i, v) in l {
            rhs[i] += v;
        }
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, triplets),
        rhs,
        m,
    })
}

/// Values imposed on artificial truncation faces.
#[derive(Clone)]
pub enum ArtificialBc {
    Zero,
    /// Use a closed-form extension (e.g. the exact solution).
    Exact(Arc<dyn VectorFunction>),
}

/// Degree-1 solution `u: Ω → C^m` with vertex values.
#[derive(Clone)]
pub struct Solution {
    mesh: Arc<Mesh>,
    m: usize,
    values: Vec<C64>,
    pub stats: Option<SolveStats>,
    pub datum: String,
}

impl std::fmt::Debug for Solution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solution")
            .field("vertices", &self.mesh.num_vertices())
            .field("m", &self.m)
            .field("datum", &self.datum)
            .finish()
    }
}

impl Solution {
    pub fn from_values(mesh: Arc<Mesh>, m: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() * m {
            return Err(Error::Precondition("value vector has the wrong length".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Precondition("non-finite solution values".into()));
        }
        Ok(Solution {
            mesh,
            m,
            values,
            stats: None,
            datum: String::new(),
        })
    }

    /// Nodal interpolant of a closed-form field.
    pub fn interpolate(mesh: Arc<Mesh>, f: &dyn VectorFunction) -> Self {
        let m = f.components();
        let mut values = vec![ZERO; mesh.num_vertices() * m];
        values
            .par_chunks_mut(m)
            .zip(mesh.vertices().par_iter())
            .for_each(|(out, x)| f.eval(x, out));
        Solution {
            mesh,
            m,
            values,
            stats: None,
            datum: f.describe(),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn vertex_value(&self, v: usize) -> &[C64] {
        &self.values[v * self.m..(v + 1) * self.m]
    }

    /// `self - other` on the same mesh.
    pub fn difference(&self, other: &Solution) -> Result<Solution> {
        if !Arc::ptr_eq(&self.mesh, &other.mesh) || self.m != other.m {
            return Err(Error::Precondition("solutions live on different meshes".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Solution {
            mesh: self.mesh.clone(),
            m: self.m,
            values,
            stats: None,
            datum: format!("({}) - ({})", self.datum, other.datum),
        })
    }

    pub fn scaled(&self, c: C64) -> Solution {
        Solution {
            mesh: self.mesh.clone(),
            m: self.m,
            values: self.values.iter().map(|v| v * c).collect(),
            stats: self.stats.clone(),
            datum: format!("{c} * ({})", self.datum),
        }
    }

    /// Value at barycentric coordinates of simplex `k`.
    pub fn value_in(&self, k: usize, bary: &[f64; 4], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for (i, &v) in self.mesh.simplex(k).iter().enumerate() {
            for (a, o) in out.iter_mut().enumerate() {
                *o += self.values[v * self.m + a] * bary[i];
            }
        }
    }

    /// Value at an arbitrary point; false outside the mesh.
    pub fn value_at(&self, x: &Point, out: &mut [C64]) -> bool {
        match self.mesh.locate(x) {
            Some((k, b)) => {
                self.value_in(k, &b, out);
                true
            }
            None => false,
        }
    }

    /// Exact gradient on simplex `k`: `out[α][i] = ∂_i u^α`.
    pub fn gradient(&self, k: usize, out: &mut [[C64; 3]]) {
        let geo = self.mesh.geometry(k);
        out.iter_mut().for_each(|g| *g = [ZERO; 3]);
        for (p, &v) in self.mesh.simplex(k).iter().enumerate() {
            for (a, g) in out.iter_mut().enumerate() {
                let val = self.values[v * self.m + a];
                for i in 0..self.mesh.dim() {
                    g[i] += val * geo.grads[p][i];
                }
            }
        }
    }

    /// Per-simplex gradient tensors.
    pub fn gradient_field(&self) -> Vec<Vec<[C64; 3]>> {
        (0..self.mesh.num_simplices())
            .into_par_iter()
            .map(|k| {
                let mut g = vec![[ZERO; 3]; self.m];
                self.gradient(k, &mut g);
                g
            })
            .collect()
    }

    /// Max nodal deviation from `f` over graph-boundary vertices.
    pub fn trace_error(&self, f: &dyn VectorFunction) -> f64 {
        let mut fv = vec![ZERO; self.m];
        let mut worst: f64 = 0.0;
        for (v, x) in self.mesh.vertices().iter().enumerate() {
            if self.mesh.vertex_kind(v) == VertexKind::Graph {
                f.eval(x, &mut fv);
                for a in 0..self.m {
                    worst = worst.max((self.values[v * self.m + a] - fv[a]).norm());
                }
            }
        }
        worst
    }
}

/// Dirichlet values on all boundary vertices: the datum on graph vertices,
/// the policy on truncation vertices.
fn boundary_values(mesh: &Mesh, m: usize, datum: &dyn VectorFunction, bc: &ArtificialBc) -> Vec<Option<Vec<C64>>> {
    mesh.vertices()
        .par_iter()
        .enumerate()
        .map(|(v, x)| match mesh.vertex_kind(v) {
            VertexKind::Interior => None,
            VertexKind::Graph => {
                let mut o = vec![ZERO; m];
                datum.eval(x, &mut o);
                Some(o)
            }
            VertexKind::Truncation => {
                let mut o = vec![ZERO; m];
                if let ArtificialBc::Exact(f) = bc {
                    f.eval(x, &mut o);
                }
                Some(o)
            }
        })
        .collect()
}

/// Solves `L u = source` with `u = datum` on the graph boundary and the
/// artificial policy on truncation faces.
pub fn solve_dirichlet_with_source(
    mesh: Arc<Mesh>,
    coeffs: &CoefficientField,
    datum: &dyn VectorFunction,
    bc: &ArtificialBc,
    source: Option<&dyn VectorFunction>,
    opts: &SolverOptions,
) -> Result<Solution> {
    let m = coeffs.components();
    if datum.components() != m {
        return Err(Error::Precondition(format!(
            "datum has {} components, coefficients {m}",
            datum.components()
        )));
    }
    let sys = assemble(&mesh, coeffs, source)?;
    let bvals = boundary_values(&mesh, m, datum, bc);
    let nv = mesh.num_vertices();
    let mut map = vec![usize::MAX; nv * m];
    let mut free = 0;
    let mut fixed = vec![ZERO; nv * m];
    for v in 0..nv {
        match &bvals[v] {
            None => {
                for a in 0..m {
                    map[v * m + a] = free;
                    free += 1;
                }
            }
            Some(vals) => fixed[v * m..(v + 1) * m].copy_from_slice(vals),
        }
    }
    // rhs_I = F_I - A_IB g_B
    let mut ag = vec![ZERO; nv * m];
    sys.matrix.matvec(&fixed, &mut ag);
    let mut rhs = vec![ZERO; free];
    for i in 0..nv * m {
        if map[i] != usize::MAX {
            rhs[map[i]] = sys.rhs[i] - ag[i];
        }
    }
    let a_ii = sys.matrix.restrict(&map, &map, free);
    let opts = SolverOptions {
        hermitian: coeffs.is_hermitian(),
        ..*opts
    };
    let (x, stats) = sparse::solve(&a_ii, &rhs, &opts).map_err(|e| e.context("Dirichlet solve"))?;
    let mut values = fixed;
    for i in 0..nv * m {
        if map[i] != usize::MAX {
            values[i] = x[map[i]];
        }
    }
    let mut sol = Solution::from_values(mesh, m, values)?;
    sol.stats = Some(stats);
    sol.datum = datum.describe();
    Ok(sol)
}

pub fn solve_dirichlet(
    mesh: Arc<Mesh>,
    coeffs: &CoefficientField,
    datum: &dyn VectorFunction,
    bc: &ArtificialBc,
) -> Result<Solution> {
    solve_dirichlet_with_source(mesh, coeffs, datum, bc, None, &SolverOptions::default())
}

/// Weak-form residual `max |(A u - F)_i|` over interior rows, relative to `|F| + |A u|`.
pub fn galerkin_residual(sol: &Solution, coeffs: &CoefficientField, source: Option<&dyn VectorFunction>) -> Result<f64> {
    let mesh = sol.mesh();
    let sys = assemble(mesh, coeffs, source)?;
    let mut au = vec![ZERO; sys.rhs.len()];
    sys.matrix.matvec(sol.values(), &mut au);
    let m = sol.components();
    let mut num = 0.0;
    let mut den = 0.0;
    for v in 0..mesh.num_vertices() {
        if mesh.vertex_kind(v) == VertexKind::Interior {
            for a in 0..m {
                let i = v * m + a;
                num += (au[i] - sys.rhs[i]).norm_sqr();
                den += sys.rhs[i].norm_sqr().max(au[i].norm_sqr());
            }
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// `(∫ |u_h - u|^2)^{1/2}` by the volume rule.
pub fn l2_error(sol: &Solution, exact: &dyn VectorFunction) -> f64 {
    let mesh = sol.mesh();
    let rule = simplex_rule(mesh.dim());
    let m = sol.components();
    let parts: Vec<f64> = (0..mesh.num_simplices())
        .into_par_iter()
        .map(|k| {
            let mut uh = vec![ZERO; m];
            let mut ue = vec![ZERO; m];
            let vol = mesh.geometry(k).volume;
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| {
                    sol.value_in(k, b, &mut uh);
                    exact.eval(&mesh.point_at(k, b), &mut ue);
                    let e: f64 = uh.iter().zip(&ue).map(|(a, b)| (a - b).norm_sqr()).sum();
                    w * vol * e
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSpec;
    use crate::fields::{AffineField, ConstantField, Manufactured, ManufacturedSource};
    use crate::geometry::GraphDomain;
    use crate::mesh::{graph_box_mesh, GraphMeshSpec};

    fn mesh2(h: f64) -> Arc<Mesh> {
        let dom = GraphDomain::sawtooth(0.5, 1.0, 1.0, 1.0).unwrap();
        Arc::new(graph_box_mesh(&dom, &GraphMeshSpec::uniform(&dom, h)).unwrap())
    }

    #[test]
    fn laplace_rows_annihilate_constants() {
        let mesh = mesh2(0.25);
        let sys = assemble(&mesh, &CoefficientField::identity(2, 1), None).unwrap();
        let ones = vec![C64::new(1.0, 0.0); mesh.num_vertices()];
        let mut out = vec![ZERO; ones.len()];
        sys.matrix.matvec(&ones, &mut out);
        assert!(out.iter().all(|v| v.norm() < 1e-12));
        assert!(sys.matrix.hermitian_defect() < 1e-14);
    }

    #[test]
    fn zero_datum_gives_zero() {
        let mesh = mesh2(0.25);
        let c = CoefficientField::new(CoefficientSpec::complex_example(), 2, 2).unwrap();
        let sol = solve_dirichlet(mesh, &c, &ConstantField(vec![ZERO; 2]), &ArtificialBc::Zero).unwrap();
        assert!(sol.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn affine_fields_are_reproduced() {
        let mesh = mesh2(0.2);
        let f = AffineField {
            constant: C64::new(1.0, -2.0),
            slope: [C64::new(0.5, 0.1), C64::new(-1.0, 0.3), ZERO],
        };
        let exact: Arc<dyn VectorFunction> = Arc::new(f.clone());
        let c = CoefficientField::new(CoefficientSpec::complex_example(), 2, 1).unwrap();
        let sol = solve_dirichlet(mesh.clone(), &c, &f, &ArtificialBc::Exact(exact)).unwrap();
        assert!(l2_error(&sol, &f) < 1e-9);
        let mut g = vec![[ZERO; 3]; 1];
        for k in [0, mesh.num_simplices() / 2] {
            sol.gradient(k, &mut g);
            assert!((g[0][0] - f.slope[0]).norm() < 1e-8);
            assert!((g[0][1] - f.slope[1]).norm() < 1e-8);
        }
        assert!(sol.trace_error(&f) < 1e-14);
    }

    #[test]
    fn manufactured_solution_converges() {
        let field = Manufactured::standard(2, 1);
        let c = CoefficientField::identity(2, 1);
        let src = ManufacturedSource {
            field: &field,
            coeffs: &c,
        };
        let exact: Arc<dyn VectorFunction> = Arc::new(field.clone());
        let mut errs = Vec::new();
        for h in [0.25, 0.125] {
            let sol = solve_dirichlet_with_source(
                mesh2(h),
                &c,
                &field,
                &ArtificialBc::Exact(exact.clone()),
                Some(&src),
                &SolverOptions::default(),
            )
            .unwrap();
            assert!(galerkin_residual(&sol, &c, Some(&src)).unwrap() < 1e-9);
            errs.push(l2_error(&sol, &field));
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "{errs:?}");
    }
}
