//! Simple convex polytopes in vertex representation and halfspace clipping.
//!
//! A polytope of topological dimension `d` stores its vertices in the lifted
//! space `R^(d+1)` together with the `d` facet labels incident to each vertex
//! (the vertex-facet incidence). Because every polytope produced here is
//! simple, the edges follow from the labels alone: two vertices are joined
//! by an edge exactly when they share `d - 1` labels.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Largest topological dimension handled by the clipping code.
pub const MAX_DIM: usize = 6;

/// Absolute tolerance on the signed distance to a (unit-normal) hyperplane.
pub const SIDE_EPS: f64 = 1e-12;

/// Intersection parameters this close to an edge endpoint snap to it.
pub const SNAP_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} is outside the supported range 1..={MAX_DIM}")]
    UnsupportedDimension(usize),
    #[error("box bounds must satisfy lo < hi in every coordinate")]
    InvalidBounds,
    #[error("halfspace normal has zero length")]
    ZeroNormal,
    #[error("ambient dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vertex {vertex} carries {got} facet labels, expected {expected}")]
    NotSimple {
        vertex: usize,
        expected: usize,
        got: usize,
    },
    #[error("clipping removed every vertex")]
    EmptyResult,
    #[error("operation requires a nonempty polytope")]
    EmptyPolytope,
}

/// Identifier of a facet. Negative values are facets of the input domain,
/// nonnegative values are bisectors (the index of the neighboring site).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FacetLabel(pub i32);

impl FacetLabel {
    pub fn is_mesh_facet(self) -> bool {
        self.0 < 0
    }

    pub fn is_bisector(self) -> bool {
        self.0 >= 0
    }
}

impl fmt::Display for FacetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which side of a hyperplane a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
    OnBoundary,
}

/// The closed halfspace `{x : (x - anchor) . normal >= 0}`.
///
/// The normal is stored with unit length so that [`SIDE_EPS`] acts on a true
/// distance.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: Vec<f64>,
    anchor: Vec<f64>,
    label: FacetLabel,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, anchor: Vec<f64>, label: FacetLabel) -> Result<Self, GeometryError> {
        if normal.len() != anchor.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: normal.len(),
                got: anchor.len(),
            });
        }
        let norm = dot(&normal, &normal).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(GeometryError::ZeroNormal);
        }
        let normal = normal.into_iter().map(|c| c / norm).collect();
        Ok(Self {
            normal,
            anchor,
            label,
        })
    }

    /// Bisector of two (lifted) sites; the kept side is the one containing `own`.
    pub fn bisector(own: &[f64], other: &[f64], label: FacetLabel) -> Result<Self, GeometryError> {
        let normal = own.iter().zip(other).map(|(a, b)| a - b).collect();
        let anchor = own.iter().zip(other).map(|(a, b)| 0.5 * (a + b)).collect();
        Self::new(normal, anchor, label)
    }

    /// The complementary halfspace sharing the same boundary and label.
    pub fn flipped(&self) -> Self {
        Self {
            normal: self.normal.iter().map(|c| -c).collect(),
            anchor: self.anchor.clone(),
            label: self.label,
        }
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn label(&self) -> FacetLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed distance of `x` to the boundary, positive on the kept side.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.normal.len() {
            s += (x[k] - self.anchor[k]) * self.normal[k];
        }
        s
    }
}

/// Classifies `x` against `h` with absolute tolerance `eps`.
pub fn side(x: &[f64], h: &HalfSpace, eps: f64) -> Side {
    classify(h.signed_distance(x), eps)
}

#[inline]
fn classify(s: f64, eps: f64) -> Side {
    if s > eps {
        Side::Inside
    } else if s < -eps {
        Side::Outside
    } else {
        Side::OnBoundary
    }
}

/// Vertex-index pairs forming the edges of a polytope.
pub type EdgeList = Vec<[u32; 2]>;

/// A simple convex polytope of topological dimension `dim` embedded in
/// `R^(dim+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    dim: usize,
    coords: Vec<f64>,
    labels: Vec<FacetLabel>,
    edges: EdgeList,
}

impl ConvexPolytope {
    /// An empty polytope of the given dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
            labels: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Builds a polytope from flat vertex coordinates (stride `dim + 1`) and
    /// flat facet labels (stride `dim`). Edges are derived from the labels.
    pub fn from_vertices(
        dim: usize,
        coords: Vec<f64>,
        labels: Vec<FacetLabel>,
    ) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        let n = coords.len() / (dim + 1);
        if coords.len() != n * (dim + 1) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim + 1,
                got: coords.len() % (dim + 1),
            });
        }
        if labels.len() != n * dim {
            return Err(GeometryError::NotSimple {
                vertex: 0,
                expected: n * dim,
                got: labels.len(),
            });
        }
        let mut labels = labels;
        for (v, chunk) in labels.chunks_mut(dim).enumerate() {
            chunk.sort_unstable();
            if chunk.windows(2).any(|w| w[0] == w[1]) {
                return Err(GeometryError::NotSimple {
                    vertex: v,
                    expected: dim,
                    got: dim - 1,
                });
            }
        }
        let mut poly = Self {
            dim,
            coords,
            labels,
            edges: Vec::new(),
        };
        poly.edges = extract_edges(&poly);
        Ok(poly)
    }

    /// Axis-aligned box `[lo, hi]`. The face `x_k = lo_k` is labeled
    /// `-(2k+1)` and the face `x_k = hi_k` is labeled `-(2k+2)`.
    pub fn cube(dim: usize, lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        if lo.len() != dim || hi.len() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: lo.len().min(hi.len()),
            });
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(GeometryError::InvalidBounds);
        }
        let n = 1usize << dim;
        let mut coords = Vec::with_capacity(n * (dim + 1));
        let mut labels = Vec::with_capacity(n * dim);
        for corner in 0..n {
            for k in 0..dim {
                let upper = corner >> k & 1 == 1;
                coords.push(if upper { hi[k] } else { lo[k] });
                let id = 2 * k as i32 + if upper { 2 } else { 1 };
                labels.push(FacetLabel(-id));
            }
            coords.push(0.0);
        }
        Self::from_vertices(dim, coords, labels)
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit_cube(dim: usize) -> Result<Self, GeometryError> {
        Self::cube(dim, &vec![0.0; dim], &vec![1.0; dim])
    }

    /// A `dim`-simplex from `dim + 1` points in `R^dim`; the facet opposite
    /// vertex `k` is labeled `-(k+1)`.
    pub fn simplex(dim: usize, points: &[Vec<f64>]) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        if points.len() != dim + 1 || points.iter().any(|p| p.len() != dim) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim + 1,
                got: points.len(),
            });
        }
        let mut coords = Vec::with_capacity((dim + 1) * (dim + 1));
        let mut labels = Vec::with_capacity((dim + 1) * dim);
        for (v, p) in points.iter().enumerate() {
            coords.extend_from_slice(p);
            coords.push(0.0);
            for k in 0..=dim {
                if k != v {
                    labels.push(FacetLabel(-(k as i32) - 1));
                }
            }
        }
        Self::from_vertices(dim, coords, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of each vertex coordinate vector (`dim + 1`).
    pub fn ambient_dim(&self) -> usize {
        self.dim + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        let a = self.dim + 1;
        &self.coords[v * a..(v + 1) * a]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim + 1)
    }

    pub fn facets(&self, v: usize) -> &[FacetLabel] {
        &self.labels[v * self.dim..(v + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> &[FacetLabel] {
        &self.labels
    }

    /// Edges maintained incrementally through clipping.
    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    /// Distinct facet labels over all vertices, sorted.
    pub fn facet_labels(&self) -> Vec<FacetLabel> {
        let mut all = self.labels.clone();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn num_facets(&self) -> usize {
        self.facet_labels().len()
    }

    /// Checks that every vertex has exactly `dim` distinct labels and that
    /// no two vertices share a label set.
    pub fn check_simple(&self) -> Result<(), GeometryError> {
        let mut seen = HashMap::with_capacity(self.num_vertices());
        for v in 0..self.num_vertices() {
            let f = self.facets(v);
            if f.len() != self.dim || f.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GeometryError::NotSimple {
                    vertex: v,
                    expected: self.dim,
                    got: f.len(),
                });
            }
            if seen.insert(f.to_vec(), v).is_some() {
                return Err(GeometryError::NotSimple {
                    vertex: v,
                    expected: self.dim,
                    got: self.dim + 1,
                });
            }
        }
        Ok(())
    }

    /// Average of the vertex coordinates (lifted).
    pub fn vertex_centroid(&self) -> Vec<f64> {
        let a = self.ambient_dim();
        let mut c = vec![0.0; a];
        for x in self.vertices() {
            for k in 0..a {
                c[k] += x[k];
            }
        }
        let n = self.num_vertices().max(1) as f64;
        c.iter_mut().for_each(|x| *x /= n);
        c
    }

    /// Intersects with `h`, keeping the side where `h` is nonnegative.
    pub fn clip(&self, h: &HalfSpace) -> Result<ConvexPolytope, GeometryError> {
        clip(self, h)
    }
}

/// Number of labels two sorted label slices have in common.
#[inline]
fn shared_labels(a: &[FacetLabel], b: &[FacetLabel]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// All vertex pairs sharing exactly `dim - 1` facet labels.
pub fn extract_edges(p: &ConvexPolytope) -> EdgeList {
    let n = p.num_vertices();
    let want = p.dim.saturating_sub(1);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if shared_labels(p.facets(a), p.facets(b)) == want {
                edges.push([a as u32, b as u32]);
            }
        }
    }
    edges
}

/// Twice the largest distance from `z` to a vertex of `p`.
pub fn security_radius(z: &[f64], p: &ConvexPolytope) -> Result<f64, GeometryError> {
    if p.is_empty() {
        return Err(GeometryError::EmptyPolytope);
    }
    if z.len() != p.ambient_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: p.ambient_dim(),
            got: z.len(),
        });
    }
    let r2 = p
        .vertices()
        .map(|x| x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(2.0 * r2.sqrt())
}

/// `p ∩ h`, preserving simplicity.
///
/// Vertices on the boundary (within [`SIDE_EPS`]) are kept with their labels
/// and treated as lying inside; an edge from such a vertex to a vertex
/// outside produces a coincident new vertex carrying `h`'s label. This keeps
/// every vertex at exactly `dim` labels.
pub fn clip(p: &ConvexPolytope, h: &HalfSpace) -> Result<ConvexPolytope, GeometryError> {
    let dim = p.dim;
    let amb = dim + 1;
    if h.dim() != amb {
        return Err(GeometryError::DimensionMismatch {
            expected: amb,
            got: h.dim(),
        });
    }
    if p.is_empty() {
        return Err(GeometryError::EmptyResult);
    }
    let n = p.num_vertices();
    let dist: Vec<f64> = p.vertices().map(|x| h.signed_distance(x)).collect();
    let mut sides: Vec<Side> = dist.iter().map(|&s| classify(s, SIDE_EPS)).collect();

    if !sides.contains(&Side::Outside) {
        return Ok(p.clone());
    }
    if !sides.contains(&Side::Inside) {
        return Err(GeometryError::EmptyResult);
    }

    // Crossings whose intersection would land on an endpoint: that endpoint
    // becomes a boundary vertex.
    for e in &p.edges {
        let (a, b) = (e[0] as usize, e[1] as usize);
        let (sa, sb) = (sides[a], sides[b]);
        if sa == Side::Inside && sb == Side::Outside || sa == Side::Outside && sb == Side::Inside {
            let t = dist[a] / (dist[a] - dist[b]);
            if t < SNAP_EPS {
                sides[a] = Side::OnBoundary;
            } else if t > 1.0 - SNAP_EPS {
                sides[b] = Side::OnBoundary;
            }
        }
    }
    if !sides.contains(&Side::Outside) {
        return Ok(p.clone());
    }
    if !sides.contains(&Side::Inside) {
        return Err(GeometryError::EmptyResult);
    }

    let mut remap = vec![u32::MAX; n];
    let mut coords = Vec::with_capacity(p.coords.len());
    let mut labels = Vec::with_capacity(p.labels.len());
    let mut kept = 0u32;
    for v in 0..n {
        if sides[v] != Side::Outside {
            remap[v] = kept;
            kept += 1;
            coords.extend_from_slice(p.vertex(v));
            labels.extend_from_slice(p.facets(v));
        }
    }

    let mut edges: EdgeList = Vec::with_capacity(p.edges.len());
    let first_new = kept;
    let mut new_labels: Vec<FacetLabel> = Vec::with_capacity(dim);
    for e in &p.edges {
        let (a, b) = (e[0] as usize, e[1] as usize);
        let (out_a, out_b) = (sides[a] == Side::Outside, sides[b] == Side::Outside);
        match (out_a, out_b) {
            (false, false) => edges.push([remap[a], remap[b]]),
            (true, true) => {}
            _ => {
                let (inner, outer) = if out_b { (a, b) } else { (b, a) };
                let q = kept;
                kept += 1;
                let (xi, xo) = (p.vertex(inner), p.vertex(outer));
                let (di, dout) = (dist[inner], dist[outer]);
                if sides[inner] == Side::OnBoundary {
                    coords.extend_from_slice(xi);
                } else {
                    let t = di / (di - dout);
                    if t > 1.0 - SNAP_EPS {
                        coords.extend_from_slice(xo);
                    } else {
                        for k in 0..amb {
                            coords.push(xi[k] + t * (xo[k] - xi[k]));
                        }
                    }
                }
                new_labels.clear();
                let (fi, fo) = (p.facets(inner), p.facets(outer));
                new_labels.extend(fi.iter().filter(|l| fo.contains(l)).copied());
                new_labels.push(h.label);
                new_labels.sort_unstable();
                labels.extend_from_slice(&new_labels);
                edges.push([remap[inner], q]);
            }
        }
    }

    // Edges lying on the new facet: pairs of new vertices sharing dim - 1
    // labels (the new label among them).
    if dim == 1 {
        // A segment has a single new vertex; nothing to connect.
    } else {
        let mut open: HashMap<Vec<FacetLabel>, u32> = HashMap::new();
        let mut key = Vec::with_capacity(dim - 1);
        for q in first_new..kept {
            let f = &labels[q as usize * dim..(q as usize + 1) * dim];
            for drop in 0..dim {
                if f[drop] == h.label {
                    continue;
                }
                key.clear();
                key.extend(f.iter().enumerate().filter(|&(k, _)| k != drop).map(|(_, l)| *l));
                if let Some(other) = open.remove(&key) {
                    edges.push([other, q]);
                } else {
                    open.insert(key.clone(), q);
                }
            }
        }
    }

    Ok(ConvexPolytope {
        dim,
        coords,
        labels,
        edges,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
