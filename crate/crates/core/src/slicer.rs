//! Hyperplane slices of diagrams for visualization.
//!
//! A slice keeps every cell fragment that the hyperplane cuts and replaces it
//! by its cross-section, expressed in an orthonormal frame of the hyperplane.
//! Slices can be nested; each level drops one dimension.

use std::collections::HashMap;
use std::io::{BufRead, Write};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::diagram::PowerDiagram;
use crate::geometry::{ConvexPolytope, FacetLabel, MAX_DIM, SIDE_EPS};
use crate::quadrature::{decompose, SimplexBatch};
use crate::Error;

/// A hyperplane `(x - anchor) . normal = 0`, with an optional follow-up
/// slice expressed in the coordinates of this one.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub anchor: Vec<f64>,
    pub normal: Vec<f64>,
    pub nested: Option<Box<SliceSpec>>,
}

impl SliceSpec {
    pub fn new(anchor: Vec<f64>, normal: Vec<f64>) -> Result<Self, Error> {
        if anchor.len() != normal.len() || anchor.is_empty() {
            return Err(Error::InvalidInput("slice anchor and normal must have equal nonzero length".into()));
        }
        if !(normal.iter().map(|x| x * x).sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput("slice normal must be nonzero".into()));
        }
        Ok(Self {
            anchor,
            normal,
            nested: None,
        })
    }

    /// The hyperplane `x_axis = value` in `dim` dimensions.
    pub fn axis(dim: usize, axis: usize, value: f64) -> Result<Self, Error> {
        if axis >= dim {
            return Err(Error::InvalidInput(format!("axis {axis} out of range for dimension {dim}")));
        }
        let mut anchor = vec![0.0; dim];
        let mut normal = vec![0.0; dim];
        anchor[axis] = value;
        normal[axis] = 1.0;
        Self::new(anchor, normal)
    }

    /// Chains axis slices given by names of the original axes.
    ///
    /// Axes are named `x`, `y`, `z` for the first three coordinates, `t` for
    /// the last one, or by their zero-based index. Later slices refer to the
    /// same original axes, so `t=0.5` followed by `x=0.2` works as expected.
    pub fn axis_chain(dim: usize, slices: &[(String, f64)]) -> Result<Self, Error> {
        if slices.is_empty() {
            return Err(Error::InvalidInput("no slice given".into()));
        }
        if slices.len() >= dim {
            return Err(Error::InvalidInput(format!(
                "{} slices leave nothing of a {dim}-dimensional diagram",
                slices.len()
            )));
        }
        let mut remaining: Vec<usize> = (0..dim).collect();
        let mut specs = Vec::new();
        for (name, value) in slices {
            let original = parse_axis(name, dim)?;
            let local = remaining
                .iter()
                .position(|&a| a == original)
                .ok_or_else(|| Error::InvalidInput(format!("axis '{name}' was already sliced")))?;
            specs.push(Self::axis(remaining.len(), local, *value)?);
            remaining.remove(local);
        }
        let mut spec = specs.pop().unwrap();
        while let Some(mut outer) = specs.pop() {
            outer.nested = Some(Box::new(spec));
            spec = outer;
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn depth(&self) -> usize {
        1 + self.nested.as_ref().map_or(0, |s| s.depth())
    }
}

/// Parses an axis name (`x`, `y`, `z`, `t` or an index).
pub fn parse_axis(name: &str, dim: usize) -> Result<usize, Error> {
    let axis = match name {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        "t" => dim - 1,
        other => other
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("unknown axis '{other}'")))?,
    };
    if axis >= dim {
        return Err(Error::InvalidInput(format!("axis '{name}' out of range for dimension {dim}")));
    }
    Ok(axis)
}

/// Affine map from local slice coordinates to the diagram's coordinates:
/// `x = origin + sum_k u_k basis[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub origin: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl Frame {
    pub fn identity(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|k| {
                let mut e = vec![0.0; dim];
                e[k] = 1.0;
                e
            })
            .collect();
        Self {
            origin: vec![0.0; dim],
            basis,
        }
    }

    pub fn local_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn to_global(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.origin.clone();
        for (uk, b) in u.iter().zip(&self.basis) {
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += uk * bi);
        }
        x
    }

    /// The frame of a hyperplane given in this frame's local coordinates.
    fn compose(&self, inner: &Frame) -> Frame {
        Frame {
            origin: self.to_global(&inner.origin),
            basis: inner
                .basis
                .iter()
                .map(|b| {
                    let mut x = vec![0.0; self.origin.len()];
                    for (bk, e) in b.iter().zip(&self.basis) {
                        x.iter_mut().zip(e).for_each(|(xi, ei)| *xi += bk * ei);
                    }
                    x
                })
                .collect(),
        }
    }
}

/// Orthonormal frame of the hyperplane with unit normal `n` through `x0`.
/// Axis-aligned normals give the remaining coordinate axes in order.
fn hyperplane_frame(x0: &[f64], n: &[f64]) -> Frame {
    let dim = n.len();
    let offset: f64 = x0.iter().zip(n).map(|(a, b)| a * b).sum();
    let origin: Vec<f64> = n.iter().map(|v| v * offset).collect();
    let skip = (0..dim)
        .max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
        .unwrap();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
    for k in (0..dim).filter(|&k| k != skip) {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        for q in std::iter::once(n).chain(basis.iter().map(Vec::as_slice)) {
            let c: f64 = e.iter().zip(q).map(|(a, b)| a * b).sum();
            e.iter_mut().zip(q).for_each(|(ei, qi)| *ei -= c * qi);
        }
        let len = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        e.iter_mut().for_each(|v| *v /= len);
        basis.push(e);
    }
    Frame { origin, basis }
}

/// A cross-section of one cell fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceCell {
    /// Index of the generating site.
    pub site: usize,
    /// The cross-section in local coordinates.
    pub polytope: ConvexPolytope,
}

/// Cross-sections of every cut cell, in site order.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMesh {
    pub dim: usize,
    pub cells: Vec<SliceCell>,
    /// Maps local coordinates back to the diagram's coordinates.
    pub frame: Frame,
}

impl SliceMesh {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.cells.iter().map(|c| c.polytope.num_vertices()).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.cells.iter().map(|c| c.polytope.edges().len()).sum()
    }

    /// Centroid-fan decomposition of each slice cell.
    pub fn simplices(&self) -> Vec<SimplexBatch> {
        self.cells.iter().map(|c| decompose(&c.polytope)).collect()
    }

    /// Vertices mapped back to the diagram's coordinates.
    pub fn global_vertices(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .flat_map(|c| c.polytope.vertices().map(|v| self.frame.to_global(&v[..self.dim])))
            .collect()
    }

    pub fn to_edge_list(&self) -> EdgeListData {
        let mut data = EdgeListData {
            dim: self.dim,
            vertices: Vec::new(),
            edges: Vec::new(),
        };
        for c in &self.cells {
            let base = data.vertices.len();
            for v in c.polytope.vertices() {
                data.vertices.push((c.site, v[..self.dim].to_vec()));
            }
            for e in c.polytope.edges() {
                data.edges.push([base + e[0] as usize, base + e[1] as usize]);
            }
        }
        data
    }

    /// Triangulated 2-faces of every cell.
    pub fn to_polygon_soup(&self) -> PolygonSoup {
        let mut soup = PolygonSoup {
            dim: self.dim,
            triangles: Vec::new(),
        };
        for c in &self.cells {
            for tri in triangulate_2_faces(&c.polytope) {
                soup.triangles.push((c.site, tri));
            }
        }
        soup
    }
}

/// Triangles `(centroid, a, b)` over every edge of every 2-face.
fn triangulate_2_faces(p: &ConvexPolytope) -> Vec<Vec<f64>> {
    let k = p.dim();
    let mut out = Vec::new();
    if k < 2 {
        return out;
    }
    // 2-faces are the vertex groups sharing k - 2 labels
    let mut faces: HashMap<Vec<FacetLabel>, Vec<u32>> = HashMap::new();
    for v in 0..p.num_vertices() {
        let labels = p.facets(v);
        for_each_subset(labels, k - 2, &mut |s| faces.entry(s.to_vec()).or_default().push(v as u32));
    }
    let mut keys: Vec<_> = faces.keys().cloned().collect();
    keys.sort();
    for key in keys {
        let verts = &faces[&key];
        if verts.len() < 3 {
            continue;
        }
        let mut centroid = vec![0.0; k];
        for &v in verts {
            centroid.iter_mut().zip(p.vertex(v as usize)).for_each(|(c, x)| *c += x);
        }
        centroid.iter_mut().for_each(|c| *c /= verts.len() as f64);
        for e in p.edges() {
            if verts.binary_search(&e[0]).is_ok() && verts.binary_search(&e[1]).is_ok() {
                let mut tri = centroid.clone();
                tri.extend_from_slice(&p.vertex(e[0] as usize)[..k]);
                tri.extend_from_slice(&p.vertex(e[1] as usize)[..k]);
                out.push(tri);
            }
        }
    }
    out
}

fn for_each_subset(items: &[FacetLabel], size: usize, f: &mut dyn FnMut(&[FacetLabel])) {
    fn go(items: &[FacetLabel], size: usize, start: usize, cur: &mut Vec<FacetLabel>, f: &mut dyn FnMut(&[FacetLabel])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, size, i + 1, cur, f);
            cur.pop();
        }
    }
    go(items, size, 0, &mut Vec::with_capacity(size), f);
}

/// Cross-section of `p` with the hyperplane through `x0` with unit normal
/// `n`, in the coordinates of `frame`. `None` when the plane misses `p` or
/// only touches it in a lower-dimensional face.
///
/// Vertices on the plane count as negative when some vertex is strictly
/// positive and as positive otherwise, so a plane through a facet returns
/// that facet.
pub fn slice_polytope(p: &ConvexPolytope, x0: &[f64], n: &[f64], frame: &Frame, cull: bool) -> Option<ConvexPolytope> {
    let d = p.dim();
    if p.is_empty() || d < 2 {
        return None;
    }
    let s: Vec<f64> = p
        .vertices()
        .map(|v| v[..d].iter().zip(x0).zip(n).map(|((a, b), c)| (a - b) * c).sum())
        .collect();
    let any_pos = s.iter().any(|&v| v > SIDE_EPS);
    let any_neg = s.iter().any(|&v| v < -SIDE_EPS);
    if cull && (!any_pos || !any_neg) && !s.iter().any(|v| v.abs() <= SIDE_EPS) {
        return None;
    }
    let positive: Vec<bool> = s
        .iter()
        .map(|&v| if v.abs() <= SIDE_EPS { !any_pos } else { v > 0.0 })
        .collect();
    let k = d - 1;
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut u = [0.0f64; MAX_DIM];
    for e in p.edges() {
        let (a, b) = (e[0] as usize, e[1] as usize);
        if positive[a] == positive[b] {
            continue;
        }
        let (va, vb) = (p.vertex(a), p.vertex(b));
        let x: Vec<f64> = if s[a].abs() <= SIDE_EPS {
            va[..d].to_vec()
        } else if s[b].abs() <= SIDE_EPS {
            vb[..d].to_vec()
        } else {
            let t = s[a] / (s[a] - s[b]);
            (0..d).map(|c| va[c] + t * (vb[c] - va[c])).collect()
        };
        for (j, bj) in frame.basis.iter().enumerate() {
            u[j] = x.iter().zip(&frame.origin).zip(bj).map(|((xi, oi), bi)| (xi - oi) * bi).sum();
        }
        coords.extend_from_slice(&u[..k]);
        coords.push(0.0);
        labels.extend(p.facets(a).iter().filter(|l| p.facets(b).binary_search(l).is_ok()));
    }
    if coords.len() / (k + 1) < k + 1 {
        return None;
    }
    ConvexPolytope::from_vertices(k, coords, labels).ok()
}

fn slice_cells(cells: &[(usize, &ConvexPolytope)], spec: &SliceSpec, cull: bool) -> (Vec<SliceCell>, Frame) {
    let norm = spec.normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n: Vec<f64> = spec.normal.iter().map(|x| x / norm).collect();
    let frame = hyperplane_frame(&spec.anchor, &n);
    let one = |&(site, p): &(usize, &ConvexPolytope)| {
        slice_polytope(p, &spec.anchor, &n, &frame, cull).map(|polytope| SliceCell { site, polytope })
    };
    #[cfg(feature = "parallel")]
    let out: Vec<SliceCell> = cells.par_iter().filter_map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let out: Vec<SliceCell> = cells.iter().filter_map(one).collect();
    (out, frame)
}

fn slice_recursive(cells: &[(usize, &ConvexPolytope)], spec: &SliceSpec, outer: &Frame, cull: bool) -> Result<SliceMesh, Error> {
    let dim = cells.first().map_or(spec.dim(), |c| c.1.dim());
    if spec.dim() != outer.local_dim() || dim != spec.dim() {
        return Err(Error::InvalidInput(format!(
            "a {}-dimensional slice cannot cut a {}-dimensional mesh",
            spec.dim(),
            outer.local_dim()
        )));
    }
    if spec.dim() < 2 {
        return Err(Error::InvalidInput("cannot slice a one-dimensional mesh".into()));
    }
    let (sliced, frame) = slice_cells(cells, spec, cull);
    let frame = outer.compose(&frame);
    let mesh = SliceMesh {
        dim: spec.dim() - 1,
        cells: sliced,
        frame,
    };
    match &spec.nested {
        None => Ok(mesh),
        Some(inner) => {
            let refs: Vec<(usize, &ConvexPolytope)> = mesh.cells.iter().map(|c| (c.site, &c.polytope)).collect();
            slice_recursive(&refs, inner, &mesh.frame, cull)
        }
    }
}

/// Slices every stored cell fragment of `diagram`.
pub fn slice_diagram(diagram: &PowerDiagram, spec: &SliceSpec) -> Result<SliceMesh, Error> {
    slice_diagram_with(diagram, spec, true)
}

/// Like [`slice_diagram`], optionally without the early culling test.
pub fn slice_diagram_with(diagram: &PowerDiagram, spec: &SliceSpec, cull: bool) -> Result<SliceMesh, Error> {
    if spec.dim() != diagram.dim() {
        return Err(Error::InvalidInput(format!(
            "slice of dimension {} for a {}-dimensional diagram",
            spec.dim(),
            diagram.dim()
        )));
    }
    if diagram.cells().iter().any(|c| !c.is_empty() && c.fragments.is_empty()) {
        return Err(Error::InvalidInput("diagram was computed without keeping its cells".into()));
    }
    let cells: Vec<(usize, &ConvexPolytope)> = diagram
        .cells()
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.fragments.iter().map(move |f| (i, f)))
        .collect();
    slice_recursive(&cells, spec, &Frame::identity(diagram.dim()), cull)
}

/// Vertices tagged with their cell, and edges as vertex index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeListData {
    pub dim: usize,
    pub vertices: Vec<(usize, Vec<f64>)>,
    pub edges: Vec<[usize; 2]>,
}

/// Triangles tagged with their cell, each as three points.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonSoup {
    pub dim: usize,
    pub triangles: Vec<(usize, Vec<f64>)>,
}

fn fmt_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

/// Writes `# comments`, a `dim nv ne` line, `cell x...` vertex lines and
/// `a b` edge lines.
pub fn write_edge_list<W: Write>(mut out: W, data: &EdgeListData, comments: &[String]) -> Result<(), Error> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{} {} {}", data.dim, data.vertices.len(), data.edges.len())?;
    for (cell, x) in &data.vertices {
        writeln!(out, "{cell} {}", fmt_floats(x))?;
    }
    for [a, b] in &data.edges {
        writeln!(out, "{a} {b}")?;
    }
    Ok(())
}

/// Writes `# comments`, a `dim nt` line, then `cell a... b... c...` lines.
pub fn write_polygon_soup<W: Write>(mut out: W, soup: &PolygonSoup, comments: &[String]) -> Result<(), Error> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{} {}", soup.dim, soup.triangles.len())?;
    for (cell, t) in &soup.triangles {
        writeln!(out, "{cell} {}", fmt_floats(t))?;
    }
    Ok(())
}

fn data_lines<R: BufRead>(input: R) -> Result<Vec<(usize, Vec<String>)>, Error> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((k + 1, t.split_whitespace().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, Error> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value '{s}'"),
    })
}

fn expect_len(line: usize, fields: &[String], n: usize) -> Result<(), Error> {
    if fields.len() != n {
        return Err(Error::Parse {
            line,
            msg: format!("expected {n} fields, found {}", fields.len()),
        });
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<EdgeListData, Error> {
    let lines = data_lines(input)?;
    let mut it = lines.iter();
    let (l, h) = it.next().ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
    expect_len(*l, h, 3)?;
    let (dim, nv, ne): (usize, usize, usize) = (parse(*l, &h[0])?, parse(*l, &h[1])?, parse(*l, &h[2])?);
    let mut data = EdgeListData {
        dim,
        vertices: Vec::with_capacity(nv),
        edges: Vec::with_capacity(ne),
    };
    for _ in 0..nv {
        let (l, f) = it.next().ok_or(Error::Parse { line: 0, msg: "missing vertex lines".into() })?;
        expect_len(*l, f, dim + 1)?;
        let x = f[1..].iter().map(|s| parse(*l, s)).collect::<Result<Vec<f64>, _>>()?;
        data.vertices.push((parse(*l, &f[0])?, x));
    }
    for _ in 0..ne {
        let (l, f) = it.next().ok_or(Error::Parse { line: 0, msg: "missing edge lines".into() })?;
        expect_len(*l, f, 2)?;
        let e = [parse(*l, &f[0])?, parse(*l, &f[1])?];
        if e[0] >= nv || e[1] >= nv {
            return Err(Error::Parse { line: *l, msg: "edge refers to a missing vertex".into() });
        }
        data.edges.push(e);
    }
    if let Some((l, _)) = it.next() {
        return Err(Error::Parse { line: *l, msg: "trailing data".into() });
    }
    Ok(data)
}

pub fn read_polygon_soup<R: BufRead>(input: R) -> Result<PolygonSoup, Error> {
    let lines = data_lines(input)?;
    let mut it = lines.iter();
    let (l, h) = it.next().ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
    expect_len(*l, h, 2)?;
    let (dim, nt): (usize, usize) = (parse(*l, &h[0])?, parse(*l, &h[1])?);
    let mut soup = PolygonSoup {
        dim,
        triangles: Vec::with_capacity(nt),
    };
    for _ in 0..nt {
        let (l, f) = it.next().ok_or(Error::Parse { line: 0, msg: "missing triangle lines".into() })?;
        expect_len(*l, f, 3 * dim + 1)?;
        let x = f[1..].iter().map(|s| parse(*l, s)).collect::<Result<Vec<f64>, _>>()?;
        soup.triangles.push((parse(*l, &f[0])?, x));
    }
    if let Some((l, _)) = it.next() {
        return Err(Error::Parse { line: *l, msg: "trailing data".into() });
    }
    Ok(soup)
}
