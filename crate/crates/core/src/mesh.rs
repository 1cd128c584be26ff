//! Conforming simplicial meshes: boundary-fitted structured meshes of
//! truncated graph domains, triangulated polygons, a point locator, and a
//! plain-text dump format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GraphDomain, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Discretizes the physical boundary (the graph or the polygon).
    Graph,
    /// Artificial face introduced by truncating an unbounded domain.
    Truncation,
}

impl BoundaryTag {
    fn name(self) -> &'static str {
        match self {
            BoundaryTag::Graph => "graph",
            BoundaryTag::Truncation => "truncation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFacet {
    pub vertices: Vec<usize>,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Interior,
    Graph,
    Truncation,
}

/// Per-simplex affine data: barycentric gradients and volume.
#[derive(Debug, Clone, Copy)]
pub struct SimplexGeometry {
    pub grads: [[f64; 3]; 4],
    pub volume: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    simplices: Vec<[usize; 4]>,
    boundary: Vec<BoundaryFacet>,
    kinds: Vec<VertexKind>,
    geometry: Vec<SimplexGeometry>,
    size: f64,
    locator: Locator,
}

impl Mesh {
    /// Builds a mesh; orientation is normalized and degenerate simplices rejected.
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        mut simplices: Vec<[usize; 4]>,
        boundary: Vec<BoundaryFacet>,
    ) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        let n = vertices.len();
        let mut geometry = Vec::with_capacity(simplices.len());
        let mut size: f64 = 0.0;
        for (k, s) in simplices.iter_mut().enumerate() {
            if s[..=dim].iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("simplex {k} references a missing vertex")));
            }
            let mut vol = signed_volume(dim, &vertices, s);
            if vol < 0.0 {
                s.swap(0, 1);
                vol = -vol;
            }
            let scale = (0..dim)
                .map(|i| crate::geometry::dist(&vertices[s[0]], &vertices[s[i + 1]]))
                .fold(0.0, f64::max);
            if vol <= 1e-14 * scale.powi(dim as i32) {
                return Err(Error::Mesh(format!("simplex {k} is degenerate (volume {vol:e})")));
            }
            for i in 0..=dim {
                for j in i + 1..=dim {
                    size = size.max(crate::geometry::dist(&vertices[s[i]], &vertices[s[j]]));
                }
            }
            geometry.push(simplex_geometry(dim, &vertices, s, vol));
        }
        let mut kinds = vec![VertexKind::Interior; n];
        for f in &boundary {
            if f.vertices.len() != dim || f.vertices.iter().any(|&v| v >= n) {
                return Err(Error::Mesh("malformed boundary facet".into()));
            }
            for &v in &f.vertices {
                kinds[v] = match (kinds[v], f.tag) {
                    (_, BoundaryTag::Graph) | (VertexKind::Graph, _) => VertexKind::Graph,
                    _ => VertexKind::Truncation,
                };
            }
        }
        let locator = Locator::build(dim, &vertices, &simplices);
        let mesh = Mesh {
            dim,
            vertices,
            simplices,
            boundary,
            kinds,
            geometry,
            size,
            locator,
        };
        mesh.check_conforming()?;
        Ok(mesh)
    }

    /// Every interior facet is shared by exactly two simplices and every
    /// other facet is a tagged boundary facet.
    fn check_conforming(&self) -> Result<()> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in &self.simplices {
            for skip in 0..=self.dim {
                let mut f: Vec<usize> = (0..=self.dim).filter(|&i| i != skip).map(|i| s[i]).collect();
                f.sort_unstable();
                *count.entry(f).or_default() += 1;
            }
        }
        let mut tagged: HashMap<Vec<usize>, usize> = HashMap::new();
        for b in &self.boundary {
            let mut f = b.vertices.clone();
            f.sort_unstable();
            *tagged.entry(f).or_default() += 1;
        }
        for (f, c) in &count {
            match (c, tagged.get(f)) {
                (1, Some(1)) | (2, None) => {}
                (1, None) => {
                    return Err(Error::Mesh(format!("untagged boundary facet {f:?}")));
                }
                _ => return Err(Error::Mesh(format!("non-conforming facet {f:?}"))),
            }
        }
        if tagged.len() != self.boundary.len() || tagged.keys().any(|f| !count.contains_key(f)) {
            return Err(Error::Mesh("boundary facet not on any simplex".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[[usize; 4]] {
        &self.simplices
    }

    /// The `dim + 1` vertex indices of simplex `k`.
    pub fn simplex(&self, k: usize) -> &[usize] {
        &self.simplices[k][..=self.dim]
    }

    pub fn boundary(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn vertex_kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }

    pub fn kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn geometry(&self, k: usize) -> &SimplexGeometry {
        &self.geometry[k]
    }

    /// Longest edge length.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    /// Physical point for barycentric coordinates in simplex `k`.
    pub fn point_at(&self, k: usize, bary: &[f64; 4]) -> Point {
        let mut p = [0.0; 3];
        for (i, &v) in self.simplex(k).iter().enumerate() {
            for c in 0..3 {
                p[c] += bary[i] * self.vertices[v][c];
            }
        }
        p
    }

    /// Barycentric coordinates of `x` relative to simplex `k`.
    pub fn barycentric(&self, k: usize, x: &Point) -> [f64; 4] {
        let g = &self.geometry[k];
        let v0 = self.vertices[self.simplices[k][0]];
        let d = crate::geometry::sub(x, &v0);
        let mut b = [0.0; 4];
        let mut rest = 0.0;
        for i in 1..=self.dim {
            b[i] = crate::geometry::dot(&g.grads[i], &d);
            rest += b[i];
        }
        b[0] = 1.0 - rest;
        b
    }

    /// Simplex containing `x` with its barycentric coordinates.
    pub fn locate(&self, x: &Point) -> Option<(usize, [f64; 4])> {
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for &k in self.locator.candidates(x) {
            let b = self.barycentric(k, x);
            let worst = b[..=self.dim].iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((k, b));
            }
            if best.as_ref().map_or(true, |(_, _, w)| worst > *w) {
                best = Some((k, b, worst));
            }
        }
        best.filter(|(_, _, w)| *w >= -1e-9).map(|(k, b, _)| (k, b))
    }

    /// Writes the plain-text mesh format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nta-mesh 1");
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.dim].iter().map(|c| format!("{c:e}")).collect();
            let _ = writeln!(out, "{}", coords.join(" "));
        }
        let _ = writeln!(out, "simplices {}", self.simplices.len());
        for s in &self.simplices {
            let ids: Vec<String> = s[..=self.dim].iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        let _ = writeln!(out, "boundary {}", self.boundary.len());
        for f in &self.boundary {
            let ids: Vec<String> = f.vertices.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{} {}", f.tag.name(), ids.join(" "));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the format written by [`Mesh::dump`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or(Error::Format {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let bad = |line: usize, message: String| Error::Format { line, message };
        let (l, header) = next("header")?;
        if header != "nta-mesh 1" {
            return Err(bad(l, format!("unknown header `{header}`")));
        }
        let keyed = |l: usize, s: &str, key: &str| -> Result<usize> {
            let mut it = s.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(l, format!("expected `{key} <n>`")));
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(l, format!("expected `{key} <n>`")))
        };
        let (l, s) = next("dim")?;
        let dim = keyed(l, s, "dim")?;
        if !(dim == 2 || dim == 3) {
            return Err(bad(l, format!("unsupported dimension {dim}")));
        }
        let (l, s) = next("vertices")?;
        let nv = keyed(l, s, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, s) = next("vertex")?;
            let c: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(l, e.to_string()))?;
            if c.len() != dim {
                return Err(bad(l, format!("expected {dim} coordinates")));
            }
            vertices.push([c[0], c[1], if dim == 3 { c[2] } else { 0.0 }]);
        }
        let (l, s) = next("simplices")?;
        let ns = keyed(l, s, "simplices")?;
        let mut simplices = Vec::with_capacity(ns);
        for _ in 0..ns {
            let (l, s) = next("simplex")?;
            let ids = parse_ids(s).map_err(|m| bad(l, m))?;
            if ids.len() != dim + 1 {
                return Err(bad(l, format!("expected {} vertex ids", dim + 1)));
            }
            let mut t = [0; 4];
            t[..=dim].copy_from_slice(&ids);
            simplices.push(t);
        }
        let (l, s) = next("boundary")?;
        let nb = keyed(l, s, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (l, s) = next("boundary facet")?;
            let (tag, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
            let tag = match tag {
                "graph" => BoundaryTag::Graph,
                "truncation" => BoundaryTag::Truncation,
                other => return Err(bad(l, format!("unknown boundary tag `{other}`"))),
            };
            let ids = parse_ids(rest).map_err(|m| bad(l, m))?;
            boundary.push(BoundaryFacet { vertices: ids, tag });
        }
        Mesh::new(dim, vertices, simplices, boundary)
    }
}

fn parse_ids(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn signed_volume(dim: usize, v: &[Point], s: &[usize; 4]) -> f64 {
    let a = v[s[0]];
    let e = |i: usize| crate::geometry::sub(&v[s[i]], &a);
    if dim == 2 {
        let (b, c) = (e(1), e(2));
        0.5 * (b[0] * c[1] - b[1] * c[0])
    } else {
        let (b, c, d) = (e(1), e(2), e(3));
        (b[0] * (c[1] * d[2] - c[2] * d[1]) - b[1] * (c[0] * d[2] - c[2] * d[0])
            + b[2] * (c[0] * d[1] - c[1] * d[0]))
            / 6.0
    }
}

fn simplex_geometry(dim: usize, v: &[Point], s: &[usize; 4], volume: f64) -> SimplexGeometry {
    // Rows of the inverse of the edge matrix [v1-v0, ..., vd-v0] give the
    // gradients of barycentric coordinates 1..d.
    let a = v[s[0]];
    let mut m = nalgebra::Matrix3::<f64>::identity();
    for i in 0..dim {
        let e = crate::geometry::sub(&v[s[i + 1]], &a);
        for c in 0..dim {
            m[(c, i)] = e[c];
        }
    }
    let inv = m.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros);
    let mut grads = [[0.0; 3]; 4];
    for i in 0..dim {
        for c in 0..dim {
            grads[i + 1][c] = inv[(i, c)];
        }
    }
    for c in 0..dim {
        grads[0][c] = -(1..=dim).map(|i| grads[i][c]).sum::<f64>();
    }
    SimplexGeometry { grads, volume }
}

/// Uniform bucket grid over simplex bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    lo: Point,
    cell: Point,
    counts: [usize; 3],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Locator {
    fn build(dim: usize, vertices: &[Point], simplices: &[[usize; 4]]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in vertices {
            for c in 0..dim {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        let mut counts = [1usize; 3];
        let mut cell = [1.0; 3];
        let target = (simplices.len().max(1) as f64).powf(1.0 / dim as f64).ceil();
        for c in 0..dim {
            let ext = (hi[c] - lo[c]).max(1e-12);
            counts[c] = (target as usize).clamp(1, 4096);
            cell[c] = ext / counts[c] as f64;
        }
        if dim == 2 {
            lo[2] = 0.0;
        }
        let total = counts[0] * counts[1] * counts[2];
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (k, s) in simplices.iter().enumerate() {
            let mut blo = [usize::MAX; 3];
            let mut bhi = [0usize; 3];
            for c in 0..3 {
                if c >= dim {
                    blo[c] = 0;
                    bhi[c] = 0;
                    continue;
                }
                for &v in &s[..=dim] {
                    let idx = (((vertices[v][c] - lo[c]) / cell[c]).floor().max(0.0) as usize)
                        .min(counts[c] - 1);
                    blo[c] = blo[c].min(idx);
                    bhi[c] = bhi[c].max(idx);
                }
            }
            for i in blo[0]..=bhi[0] {
                for j in blo[1]..=bhi[1] {
                    for l in blo[2]..=bhi[2] {
                        buckets[(l * counts[1] + j) * counts[0] + i].push(k);
                    }
                }
            }
        }
        let mut start = Vec::with_capacity(total + 1);
        let mut items = Vec::new();
        start.push(0);
        for b in buckets {
            items.extend(b);
            start.push(items.len());
        }
        Locator {
            lo,
            cell,
            counts,
            start,
            items,
        }
    }

    fn candidates(&self, x: &Point) -> &[usize] {
        let mut idx = [0usize; 3];
        for c in 0..3 {
            let f = ((x[c] - self.lo[c]) / self.cell[c]).floor();
            if f < -1e-9 * self.counts[c] as f64 - 1.0 || f > self.counts[c] as f64 {
                return &[];
            }
            idx[c] = (f.max(0.0) as usize).min(self.counts[c] - 1);
        }
        let b = (idx[2] * self.counts[1] + idx[1]) * self.counts[0] + idx[0];
        &self.items[self.start[b]..self.start[b + 1]]
    }
}

/// `n` uniform intervals of `[a, b]` (returns `n + 1` nodes).
pub fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

/// Nodes on `[lo, hi]` with spacing `fine` on `[focus - width, focus + width]`
/// and spacing growing geometrically by `growth` outside, capped at `coarse`.
pub fn graded_nodes(lo: f64, hi: f64, focus: f64, width: f64, fine: f64, growth: f64, coarse: f64) -> Vec<f64> {
    let a = (focus - width).max(lo);
    let b = (focus + width).min(hi);
    let n = ((b - a) / fine).round().max(1.0) as usize;
    let mut nodes = uniform_nodes(a, b, n);
    let mut right = Vec::new();
    let (mut x, mut h) = (b, fine);
    while x < hi - 1e-12 {
        h = (h * growth).min(coarse);
        x = if hi - x < 1.5 * h { hi } else { x + h };
        right.push(x);
    }
    let mut left = Vec::new();
    let (mut x, mut h) = (a, fine);
    while x > lo + 1e-12 {
        h = (h * growth).min(coarse);
        x = if x - lo < 1.5 * h { lo } else { x - h };
        left.push(x);
    }
    left.reverse();
    left.append(&mut nodes);
    left.extend(right);
    left
}

/// Fractions in `[0, 1]` starting with spacing `first`, growing by `growth`
/// up to `coarse`.
pub fn boundary_graded(first: f64, growth: f64, coarse: f64) -> Vec<f64> {
    let mut t = vec![0.0];
    let (mut x, mut h) = (0.0, first);
    while x < 1.0 - 1e-12 {
        x = if 1.0 - x < 1.5 * h { 1.0 } else { x + h };
        t.push(x);
        h = (h * growth).min(coarse);
    }
    t
}

/// Inserts `breaks` lying inside the node range, removing nodes closer than
/// `tol` times the local spacing to an inserted breakpoint.
pub fn merge_breakpoints(nodes: &[f64], breaks: &[f64], tol: f64) -> Vec<f64> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    let inner: Vec<f64> = breaks.iter().cloned().filter(|&b| b > lo && b < hi).collect();
    let mut out: Vec<f64> = nodes
        .windows(2)
        .flat_map(|w| {
            let h = w[1] - w[0];
            let x = w[0];
            let near = inner.iter().any(|&b| (b - x).abs() < tol * h && b != x);
            if near && x != lo {
                None
            } else {
                Some(x)
            }
        })
        .collect();
    out.push(hi);
    out.extend(inner);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    out
}

/// Specification of a boundary-fitted tensor mesh of the truncated box
/// `{x' ∈ Π [lo, hi], psi(x') < x_d < top}`. Physical heights are
/// `psi(x') + t (top - psi(x'))` for the fractions `t`.
#[derive(Debug, Clone)]
pub struct GraphMeshSpec {
    pub axes: Vec<Vec<f64>>,
    pub fractions: Vec<f64>,
    pub top: f64,
}

impl GraphMeshSpec {
    /// Uniform mesh of the full truncation box with spacing about `h`.
    pub fn uniform(domain: &GraphDomain, h: f64) -> Self {
        let r = domain.truncation();
        let n = (2.0 * r / h).round().max(2.0) as usize;
        let nt = (r / h).round().max(2.0) as usize;
        GraphMeshSpec {
            axes: vec![uniform_nodes(-r, r, n); domain.dim() - 1],
            fractions: uniform_nodes(0.0, 1.0, nt),
            top: r,
        }
    }

    /// Mesh graded toward the boundary patch around the origin: spacing `fine`
    /// within `width` of the origin laterally and near the graph, growing by
    /// `growth` up to `coarse`.
    pub fn graded(domain: &GraphDomain, fine: f64, width: f64, growth: f64, coarse: f64) -> Self {
        let r = domain.truncation();
        let axis = graded_nodes(-r, r, 0.0, width, fine, growth, coarse);
        GraphMeshSpec {
            axes: vec![axis; domain.dim() - 1],
            fractions: boundary_graded(fine / r, growth, coarse / r),
            top: r,
        }
    }
}

/// Structured boundary-fitted mesh of a truncated graph domain.
///
/// Profile breakpoints are merged into the lateral nodes in `d = 2`; in
/// `d = 3` the lateral grid must refine the profile grid so that `psi` is
/// linear on every bottom facet (checked).
pub fn graph_box_mesh(domain: &GraphDomain, spec: &GraphMeshSpec) -> Result<Mesh> {
    let dim = domain.dim();
    if spec.axes.len() != dim - 1 {
        return Err(Error::Mesh("one node array per lateral axis required".into()));
    }
    let t = &spec.fractions;
    if t.len() < 2 || t[0] != 0.0 || (t[t.len() - 1] - 1.0).abs() > 1e-14 {
        return Err(Error::Mesh("height fractions must run from 0 to 1".into()));
    }
    let mut axes = spec.axes.clone();
    if let crate::geometry::Profile::Knots { xs, .. } = domain.profile() {
        axes[0] = merge_breakpoints(&axes[0], xs, 0.3);
    }
    let height = |xp: &[f64], f: f64| {
        let p = domain.psi(xp);
        p + f * (spec.top - p)
    };
    let mut vertices = Vec::new();
    let mut simplices = Vec::new();
    let mut boundary = Vec::new();
    let nt = t.len();
    if dim == 2 {
        let xs = &axes[0];
        let nx = xs.len();
        for &x in xs {
            if domain.psi(&[x]) >= spec.top {
                return Err(Error::Mesh("profile reaches the top of the box".into()));
            }
        }
        let id = |i: usize, j: usize| j * nx + i;
        for &f in t {
            for &x in xs {
                vertices.push([x, height(&[x], f), 0.0]);
            }
        }
        for j in 0..nt - 1 {
            for i in 0..nx - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                simplices.push([a, b, c, 0]);
                simplices.push([a, c, d, 0]);
            }
        }
        for i in 0..nx - 1 {
            boundary.push(BoundaryFacet {
                vertices: vec![id(i, 0), id(i + 1, 0)],
                tag: BoundaryTag::Graph,
            });
            boundary.push(BoundaryFacet {
                vertices: vec![id(i, nt - 1), id(i + 1, nt - 1)],
                tag: BoundaryTag::Truncation,
            });
        }
        for j in 0..nt - 1 {
            for i in [0, nx - 1] {
                boundary.push(BoundaryFacet {
                    vertices: vec![id(i, j), id(i, j + 1)],
                    tag: BoundaryTag::Truncation,
                });
            }
        }
    } else {
        let (xs, ys) = (&axes[0], &axes[1]);
        let (nx, ny) = (xs.len(), ys.len());
        let id = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
        for &f in t {
            for &y in ys {
                for &x in xs {
                    vertices.push([x, y, height(&[x, y], f)]);
                }
            }
        }
        // Kuhn subdivision: 6 tetrahedra per cell along monotone paths.
        const PATHS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [1, 0, 2],
            [0, 2, 1],
            [2, 0, 1],
            [1, 2, 0],
            [2, 1, 0],
        ];
        for k in 0..nt - 1 {
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    for path in PATHS {
                        let mut c = [i, j, k];
                        let mut tet = [id(c[0], c[1], c[2]), 0, 0, 0];
                        for (s, &axis) in path.iter().enumerate() {
                            c[axis] += 1;
                            tet[s + 1] = id(c[0], c[1], c[2]);
                        }
                        simplices.push(tet);
                    }
                }
            }
        }
        let mut quad = |a: usize, b: usize, c: usize, d: usize, tag: BoundaryTag| {
            // split along a-c to match the Kuhn diagonal
            boundary.push(BoundaryFacet {
                vertices: vec![a, b, c],
                tag,
            });
            boundary.push(BoundaryFacet {
                vertices: vec![a, c, d],
                tag,
            });
        };
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                quad(id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), id(i, j + 1, 0), BoundaryTag::Graph);
                let k = nt - 1;
                quad(id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k), id(i, j + 1, k), BoundaryTag::Truncation);
            }
        }
        for k in 0..nt - 1 {
            for j in 0..ny - 1 {
                for i in [0, nx - 1] {
                    quad(id(i, j, k), id(i, j + 1, k), id(i, j + 1, k + 1), id(i, j, k + 1), BoundaryTag::Truncation);
                }
            }
            for i in 0..nx - 1 {
                for j in [0, ny - 1] {
                    quad(id(i, j, k), id(i + 1, j, k), id(i + 1, j, k + 1), id(i, j, k + 1), BoundaryTag::Truncation);
                }
            }
        }
        // psi must be linear on every bottom facet
        for f in boundary.iter().filter(|f| f.tag == BoundaryTag::Graph) {
            let mut c = [0.0; 3];
            for &v in &f.vertices {
                for a in 0..3 {
                    c[a] += vertices[v][a] / 3.0;
                }
            }
            if (domain.psi(&[c[0], c[1]]) - c[2]).abs() > 1e-10 * (1.0 + c[2].abs()) {
                return Err(Error::Mesh(format!(
                    "lateral grid does not refine the profile grid near ({:.4}, {:.4})",
                    c[0], c[1]
                )));
            }
        }
    }
    Mesh::new(dim, vertices, simplices, boundary)
}

/// Triangulates a simple counter-clockwise polygon by ear clipping and
/// refines it uniformly `levels` times (each triangle into four).
pub fn polygon_mesh(polygon: &[[f64; 2]], levels: usize) -> Result<Mesh> {
    let n = polygon.len();
    if n < 3 {
        return Err(Error::Mesh("polygon needs at least three vertices".into()));
    }
    let mut vertices: Vec<Point> = polygon.iter().map(|p| [p[0], p[1], 0.0]).collect();
    let mut tris = ear_clip(polygon)?;
    // boundary edges as vertex pairs (i, i+1)
    let mut edges: Vec<[usize; 2]> = (0..n).map(|i| [i, (i + 1) % n]).collect();
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, 0.0]);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
        let mut next_edges = Vec::with_capacity(edges.len() * 2);
        for [a, b] in edges {
            let m = midpoint(a, b, &mut vertices);
            next_edges.push([a, m]);
            next_edges.push([m, b]);
        }
        edges = next_edges;
    }
    let simplices = tris.into_iter().map(|[a, b, c]| [a, b, c, 0]).collect();
    let boundary = edges
        .into_iter()
        .map(|[a, b]| BoundaryFacet {
            vertices: vec![a, b],
            tag: BoundaryTag::Graph,
        })
        .collect();
    Mesh::new(2, vertices, simplices, boundary)
}

fn ear_clip(polygon: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut idx: Vec<usize> = (0..polygon.len()).collect();
    let mut tris = Vec::new();
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        // prefer the ear with the best minimum angle for mesh quality
        let mut best: Option<(usize, f64)> = None;
        for e in 0..m {
            let (ia, ib, ic) = (idx[(e + m - 1) % m], idx[e], idx[(e + 1) % m]);
            let (a, b, c) = (polygon[ia], polygon[ib], polygon[ic]);
            if cross(a, b, c) <= 1e-14 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = polygon[j];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if blocked {
                continue;
            }
            let q = min_angle(a, b, c);
            if best.map_or(true, |(_, bq)| q > bq) {
                best = Some((e, q));
            }
        }
        if let Some((e, _)) = best {
            let (ia, ib, ic) = (idx[(e + m - 1) % m], idx[e], idx[(e + 1) % m]);
            tris.push([ia, ib, ic]);
            idx.remove(e);
            clipped = true;
        }
        if !clipped {
            return Err(Error::Mesh("polygon is not simple or not counter-clockwise".into()));
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ang = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
        cos.clamp(-1.0, 1.0).acos()
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}
