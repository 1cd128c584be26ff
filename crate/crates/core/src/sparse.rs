//! Complex CSR matrices and the Krylov solvers used for the Dirichlet
//! problem: preconditioned CG for Hermitian systems, BiCGSTAB otherwise,
//! dense LU for small systems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        // stable, so duplicates are summed in a reproducible order
        triplets.par_sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        });
    }

    /// Submatrix on `rows × cols` given as index maps (`usize::MAX` = dropped).
    pub fn restrict(&self, row_map: &[usize], col_map: &[usize], nrows: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..self.n {
            if row_map[i] == usize::MAX {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if col_map[j] != usize::MAX {
                    t.push((row_map[i], col_map[j], a));
                }
            }
        }
        CsrMatrix::from_triplets(nrows, t)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                m[(i, j)] += a;
            }
        }
        m
    }

    /// Max over entries of `|A - A^H|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `self - other` (same dimension).
    pub fn sub(&self, other: &CsrMatrix) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, 1.0), (other, -1.0)] {
            for i in 0..m.n {
                let (c, v) = m.row(i);
                for (&j, &a) in c.iter().zip(v) {
                    t.push((i, j, a * s));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }
}

// Reductions use fixed chunks summed in order so results do not depend on
// how rayon splits the work.
const CHUNK: usize = 4096;

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    // conjugate-linear in the first argument
    let parts: Vec<C64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x.conj() * y).sum())
        .collect();
    parts.iter().sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|x| x.iter().map(|v| v.norm_sqr()).sum())
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// Incomplete LU factorization with zero fill.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                if lu.cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Singular(format!("missing diagonal in row {i}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                pos[lu.cols[k]] = k;
            }
            for k in s..e {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let piv = lu.vals[diag[j]];
                if piv.norm() == 0.0 {
                    return Err(Error::Singular(format!("zero pivot in row {j}")));
                }
                let f = lu.vals[k] / piv;
                lu.vals[k] = f;
                let (sj, ej) = (diag[j] + 1, lu.row_ptr[j + 1]);
                for kk in sj..ej {
                    let p = pos[lu.cols[kk]];
                    if p != usize::MAX {
                        let v = lu.vals[kk];
                        lu.vals[p] -= f * v;
                    }
                }
            }
            for k in s..e {
                pos[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag[i]].norm() == 0.0 {
                return Err(Error::Singular(format!("zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, r: &[C64], z: &mut [C64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = s / self.lu.vals[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    DenseLu,
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Systems smaller than this are factorized densely.
    pub dense_limit: usize,
    pub hermitian: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 20_000,
            dense_limit: 2000,
            hermitian: false,
        }
    }
}

/// Solves `A x = b`.
pub fn solve(a: &CsrMatrix, b: &[C64], opts: &SolverOptions) -> Result<(Vec<C64>, SolveStats)> {
    let n = a.n;
    let bnorm = norm(b);
    if n == 0 || bnorm == 0.0 {
        return Ok((
            vec![C64::new(0.0, 0.0); n],
            SolveStats {
                method: Method::DenseLu,
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    if n < opts.dense_limit {
        let lu = a.to_dense().lu();
        let x = lu
            .solve(&DVector::from_column_slice(b))
            .ok_or_else(|| Error::Singular("dense LU failed".into()))?;
        let x: Vec<C64> = x.iter().cloned().collect();
        let res = residual(a, &x, b) / bnorm;
        return Ok((
            x,
            SolveStats {
                method: Method::DenseLu,
                iterations: 1,
                relative_residual: res,
            },
        ));
    }
    let pre = Ilu0::new(a)?;
    if opts.hermitian {
        cg(a, b, &pre, opts)
    } else {
        bicgstab(a, b, &pre, opts)
    }
}

fn residual(a: &CsrMatrix, x: &[C64], b: &[C64]) -> f64 {
    let mut r = vec![C64::new(0.0, 0.0); b.len()];
    a.matvec(x, &mut r);
    r.iter().zip(b).map(|(ri, bi)| (bi - ri).norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    y.par_iter_mut()
        .with_min_len(4096)
        .zip(x)
        .for_each(|(yi, xi)| *yi += alpha * xi);
}

fn cg(a: &CsrMatrix, b: &[C64], pre: &Ilu0, opts: &SolverOptions) -> Result<(Vec<C64>, SolveStats)> {
    let n = a.n;
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm(b);
    let mut x = vec![zero; n];
    let mut r = b.to_vec();
    let mut z = vec![zero; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![zero; n];
    let mut history = Vec::new();
    for it in 1..=opts.max_iterations {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel < opts.tolerance {
            let true_rel = residual(a, &x, b) / bnorm;
            return Ok((
                x,
                SolveStats {
                    method: Method::Cg,
                    iterations: it,
                    relative_residual: true_rel,
                },
            ));
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .with_min_len(4096)
            .zip(&z)
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        final_residual: *history.last().unwrap_or(&1.0),
        history,
    })
}

fn bicgstab(a: &CsrMatrix, b: &[C64], pre: &Ilu0, opts: &SolverOptions) -> Result<(Vec<C64>, SolveStats)> {
    let n = a.n;
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm(b);
    let mut x = vec![zero; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut y = vec![zero; n];
    let mut s = vec![zero; n];
    let mut zz = vec![zero; n];
    let mut t = vec![zero; n];
    let mut history = Vec::new();
    for it in 1..=opts.max_iterations {
        let rho_new = dot(&r0, &r);
        if rho_new.norm() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .with_min_len(4096)
            .zip(r.par_iter().zip(&v))
            .for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
        pre.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        s.par_iter_mut()
            .with_min_len(4096)
            .zip(r.par_iter().zip(&v))
            .for_each(|(si, (ri, vi))| *si = ri - alpha * vi);
        if norm(&s) / bnorm < opts.tolerance {
            axpy(&mut x, alpha, &y);
            let rel = residual(a, &x, b) / bnorm;
            return Ok((
                x,
                SolveStats {
                    method: Method::BiCgStab,
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        pre.apply(&s, &mut zz);
        a.matvec(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt.norm() > 0.0 { dot(&t, &s) / tt } else { zero };
        axpy(&mut x, alpha, &y);
        axpy(&mut x, omega, &zz);
        r.par_iter_mut()
            .with_min_len(4096)
            .zip(s.par_iter().zip(&t))
            .for_each(|(ri, (si, ti))| *ri = si - omega * ti);
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel < opts.tolerance {
            let true_rel = residual(a, &x, b) / bnorm;
            if true_rel < 10.0 * opts.tolerance {
                return Ok((
                    x,
                    SolveStats {
                        method: Method::BiCgStab,
                        iterations: it,
                        relative_residual: true_rel,
                    },
                ));
            }
        }
        if omega.norm() == 0.0 {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: history.len(),
        final_residual: *history.last().unwrap_or(&1.0),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: C64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, C64::new(2.0, 0.0) + shift));
            if i > 0 {
                t.push((i, i - 1, C64::new(-1.0, 0.0)));
            }
            if i + 1 < n {
                t.push((i, i + 1, C64::new(-1.0, 0.3)));
                t.push((i, i + 1, C64::new(0.0, -0.3)));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = laplace_1d(4, C64::new(0.0, 0.0));
        assert_eq!(a.get(0, 1), C64::new(-1.0, 0.0));
        assert!(a.hermitian_defect() < 1e-15);
    }

    #[test]
    fn krylov_solvers_agree_with_dense() {
        let n = 3000;
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (0.5 * i as f64).cos())).collect();
        let herm = laplace_1d(n, C64::new(0.01, 0.0));
        let (x, stats) = solve(
            &herm,
            &b,
            &SolverOptions {
                hermitian: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(stats.method, Method::Cg);
        assert!(stats.relative_residual < 1e-10);
        let nonherm = laplace_1d(n, C64::new(0.01, 0.5));
        let (y, stats) = solve(&nonherm, &b, &SolverOptions::default()).unwrap();
        assert_eq!(stats.method, Method::BiCgStab);
        assert!(stats.relative_residual < 1e-9);
        // small version through dense LU
        let small = laplace_1d(50, C64::new(0.01, 0.5));
        let (z, stats) = solve(&small, &b[..50], &SolverOptions::default()).unwrap();
        assert_eq!(stats.method, Method::DenseLu);
        assert!(stats.relative_residual < 1e-12);
        assert!(x.iter().chain(&y).chain(&z).all(|v| v.re.is_finite()));
    }

    #[test]
    fn non_convergence_carries_history() {
        // 5-point Laplacian: ILU(0) is not exact here
        let k = 60;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let r = i * k + j;
                t.push((r, r, C64::new(4.0, 0.0)));
                if i > 0 {
                    t.push((r, r - k, C64::new(-1.0, 0.0)));
                }
                if i + 1 < k {
                    t.push((r, r + k, C64::new(-1.0, 0.0)));
                }
                if j > 0 {
                    t.push((r, r - 1, C64::new(-1.0, 0.0)));
                }
                if j + 1 < k {
                    t.push((r, r + 1, C64::new(-1.0, 0.0)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(k * k, t);
        let b = vec![C64::new(1.0, 0.0); k * k];
        let err = solve(
            &a,
            &b,
            &SolverOptions {
                max_iterations: 3,
                hermitian: true,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence { history, .. } => assert_eq!(history.len(), 3),
            e => panic!("{e}"),
        }
    }
}
