//! Simplicial decomposition of polytopes and fixed-order simplex quadrature.
//!
//! A polytope is split into simplices by inserting its vertex centroid and
//! recursing through its faces, inserting face centroids, until edges are
//! reached. Each leaf edge together with the chain of centroids above it
//! spans one simplex. Integrals are then evaluated with symmetric simplex
//! rules: the centroid rule, Stroud's degree-2 rule, and the
//! Grundmann-Möller rules of degree 3 and 5.

use thiserror::Error;

use crate::density::Density;
use crate::geometry::{ConvexPolytope, FacetLabel, MAX_DIM};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("no quadrature rule for dimension {dim} and order {order}")]
    Unsupported { dim: usize, order: usize },
}

/// A rule on the reference simplex: barycentric nodes (stride `dim + 1`) and
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(dim: usize, order: usize) -> Result<Self, QuadratureError> {
        quadrature_rule(dim, order)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * (self.dim + 1)..(k + 1) * (self.dim + 1)]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A rule exact for polynomials of total degree `order` on a `dim`-simplex.
pub fn quadrature_rule(dim: usize, order: usize) -> Result<QuadratureRule, QuadratureError> {
    if dim == 0 || dim > MAX_DIM || order == 0 || order > MAX_ORDER {
        return Err(QuadratureError::Unsupported { dim, order });
    }
    let n = dim as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match order {
        1 => {
            nodes.extend(std::iter::repeat_n(1.0 / (n + 1.0), dim + 1));
            weights.push(1.0);
        }
        2 => {
            let root = (n + 2.0).sqrt();
            let denom = (n + 1.0) * (n + 2.0);
            let small = (n + 2.0 - root) / denom;
            let large = (n + 2.0 + n * root) / denom;
            for v in 0..=dim {
                for k in 0..=dim {
                    nodes.push(if k == v { large } else { small });
                }
                weights.push(1.0 / (n + 1.0));
            }
        }
        3 => grundmann_moller(dim, 1, &mut nodes, &mut weights),
        _ => grundmann_moller(dim, 2, &mut nodes, &mut weights),
    }
    Ok(QuadratureRule {
        dim,
        order,
        nodes,
        weights,
    })
}

/// Grundmann-Möller rule of degree `2s + 1`, weights normalised to the
/// reference volume.
fn grundmann_moller(dim: usize, s: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let m = 2 * s + 1;
    let factorial = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
    let dim_fact = factorial(dim);
    let mut beta = vec![0usize; dim + 1];
    for i in 0..=s {
        let denom = (dim + m - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * 2f64.powi(-2 * s as i32) * denom.powi(m as i32)
            / (factorial(i) * factorial(dim + m - i))
            * dim_fact;
        compositions(s - i, &mut beta, 0, &mut |b| {
            nodes.extend(b.iter().map(|&bj| (2 * bj + 1) as f64 / denom));
            weights.push(w);
        });
    }
}

/// Calls `f` for every way of writing `total` as an ordered sum of
/// `parts.len()` nonnegative integers.
fn compositions(total: usize, parts: &mut [usize], at: usize, f: &mut dyn FnMut(&[usize])) {
    if at + 1 == parts.len() {
        parts[at] = total;
        f(parts);
        return;
    }
    for k in 0..=total {
        parts[at] = k;
        compositions(total - k, parts, at + 1, f);
    }
}

/// Simplices (each `dim + 1` points of `R^dim`, stride `(dim+1)*dim`) with
/// their volumes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimplexBatch {
    dim: usize,
    points: Vec<f64>,
    volumes: Vec<f64>,
    degenerate: bool,
}

impl SimplexBatch {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    /// True when the source polytope had no volume.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn simplex(&self, i: usize) -> &[f64] {
        let stride = (self.dim + 1) * self.dim;
        &self.points[i * stride..(i + 1) * stride]
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.volumes[i]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Appends a simplex given by `dim + 1` points, dropping it when its
    /// volume is at or below `min_volume`.
    pub fn push(&mut self, pts: &[f64], min_volume: f64) -> bool {
        let vol = simplex_volume(self.dim, pts);
        if vol <= min_volume {
            return false;
        }
        self.points.extend_from_slice(pts);
        self.volumes.push(vol);
        true
    }

    pub fn extend(&mut self, other: &SimplexBatch) {
        debug_assert_eq!(self.dim, other.dim);
        self.points.extend_from_slice(&other.points);
        self.volumes.extend_from_slice(&other.volumes);
    }
}

/// Unsigned volume of a simplex given as `dim + 1` points of `R^dim`.
pub fn simplex_volume(dim: usize, pts: &[f64]) -> f64 {
    let mut m = [[0.0f64; MAX_DIM]; MAX_DIM];
    let p0 = &pts[..dim];
    for r in 0..dim {
        let p = &pts[(r + 1) * dim..(r + 2) * dim];
        for c in 0..dim {
            m[r][c] = p[c] - p0[c];
        }
    }
    let mut det = 1.0;
    for c in 0..dim {
        let pivot = (c..dim)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap();
        if m[pivot][c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            m.swap(pivot, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..dim {
            let f = m[r][c] / m[c][c];
            for k in c..dim {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let fact: f64 = (1..=dim).map(|k| k as f64).product();
    det.abs() / fact
}

/// Splits a simple polytope into simplices by recursive centroid fans.
///
/// Coordinates lose the trailing lifted component. Simplices of negligible
/// volume are dropped; a polytope without volume yields an empty batch
/// flagged as degenerate.
pub fn decompose(p: &ConvexPolytope) -> SimplexBatch {
    let dim = p.dim();
    let mut batch = SimplexBatch::new(dim);
    if p.is_empty() {
        batch.degenerate = true;
        return batch;
    }
    let mut extent: f64 = 0.0;
    for k in 0..dim {
        let (lo, hi) = p
            .vertices()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
        extent = extent.max(hi - lo);
    }
    let fact: f64 = (1..=dim).map(|k| k as f64).product();
    let min_volume = 1e-14 * extent.powi(dim as i32) / fact;

    let verts: Vec<u32> = (0..p.num_vertices() as u32).collect();
    let mut fixed = Vec::with_capacity(dim);
    let mut chain = Vec::with_capacity((dim + 1) * dim);
    let mut ctx = Fan {
        p,
        dim,
        min_volume,
        batch: &mut batch,
    };
    ctx.recurse(&verts, &mut fixed, dim, &mut chain);
    if batch.is_empty() {
        batch.degenerate = true;
    }
    batch
}

struct Fan<'a> {
    p: &'a ConvexPolytope,
    dim: usize,
    min_volume: f64,
    batch: &'a mut SimplexBatch,
}

impl Fan<'_> {
    fn recurse(&mut self, verts: &[u32], fixed: &mut Vec<FacetLabel>, k: usize, chain: &mut Vec<f64>) {
        let d = self.dim;
        if k == 1 {
            if verts.len() == 2 {
                let start = chain.len();
                for &v in verts {
                    chain.extend_from_slice(&self.p.vertex(v as usize)[..d]);
                }
                self.batch.push(chain, self.min_volume);
                chain.truncate(start);
            }
            return;
        }
        let start = chain.len();
        chain.resize(start + d, 0.0);
        for &v in verts {
            let x = self.p.vertex(v as usize);
            for c in 0..d {
                chain[start + c] += x[c];
            }
        }
        let inv = 1.0 / verts.len() as f64;
        chain[start..].iter_mut().for_each(|c| *c *= inv);

        let mut candidates: Vec<FacetLabel> = verts
            .iter()
            .flat_map(|&v| self.p.facets(v as usize).iter().copied())
            .filter(|l| !fixed.contains(l))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut sub = Vec::with_capacity(verts.len());
        for f in candidates {
            sub.clear();
            sub.extend(
                verts
                    .iter()
                    .copied()
                    .filter(|&v| self.p.facets(v as usize).binary_search(&f).is_ok()),
            );
            if sub.len() < k {
                continue;
            }
            fixed.push(f);
            let face = std::mem::take(&mut sub);
            self.recurse(&face, fixed, k - 1, chain);
            sub = face;
            fixed.pop();
        }
        chain.truncate(start);
    }
}

/// Volume of a polytope via its simplicial decomposition.
pub fn volume(p: &ConvexPolytope) -> f64 {
    decompose(p).total_volume()
}

/// Mass and first moment of a density over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub moment: Vec<f64>,
}

impl Moments {
    /// `moment / mass`, or `None` for a massless region.
    pub fn centroid(&self) -> Option<Vec<f64>> {
        (self.mass > 0.0).then(|| self.moment.iter().map(|m| m / self.mass).collect())
    }
}

/// Mass, first moment and `∫ rho |x - site|^2` over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIntegrals {
    pub mass: f64,
    pub moment: Vec<f64>,
    pub second: f64,
}

impl CellIntegrals {
    pub fn zero(dim: usize) -> Self {
        Self {
            mass: 0.0,
            moment: vec![0.0; dim],
            second: 0.0,
        }
    }

    pub fn add(&mut self, other: &CellIntegrals) {
        self.mass += other.mass;
        self.second += other.second;
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += b;
        }
    }
}

/// Evaluates mass, moment and squared-distance integrals in one pass.
pub fn integrate_cell<D: Density + ?Sized>(
    batch: &SimplexBatch,
    rho: &D,
    rule: &QuadratureRule,
    site: &[f64],
) -> CellIntegrals {
    let d = batch.dim;
    debug_assert_eq!(rule.dim, d);
    let mut out = CellIntegrals::zero(d);
    let mut x = [0.0f64; MAX_DIM];
    for s in 0..batch.len() {
        let pts = batch.simplex(s);
        let vol = batch.volumes[s];
        let (mut mass, mut second) = (0.0, 0.0);
        let mut moment = [0.0f64; MAX_DIM];
        for (q, &w) in rule.weights.iter().enumerate() {
            let lambda = rule.node(q);
            x[..d].fill(0.0);
            for (v, &l) in lambda.iter().enumerate() {
                let p = &pts[v * d..(v + 1) * d];
                for c in 0..d {
                    x[c] += l * p[c];
                }
            }
            let f = w * rho.eval(&x[..d]);
            mass += f;
            let mut r2 = 0.0;
            for c in 0..d {
                moment[c] += f * x[c];
                let dc = x[c] - site[c];
                r2 += dc * dc;
            }
            second += f * r2;
        }
        out.mass += vol * mass;
        out.second += vol * second;
        for c in 0..d {
            out.moment[c] += vol * moment[c];
        }
    }
    out
}

/// Mass and first moment of `rho` over the batch.
pub fn integrate_moments<D: Density + ?Sized>(
    batch: &SimplexBatch,
    rho: &D,
    rule: &QuadratureRule,
) -> Moments {
    let origin = vec![0.0; batch.dim];
    let c = integrate_cell(batch, rho, rule, &origin);
    Moments {
        mass: c.mass,
        moment: c.moment,
    }
}

/// `∫ rho(x) (|x - site|^2 - weight) dx` over the batch.
pub fn integrate_energy_term<D: Density + ?Sized>(
    batch: &SimplexBatch,
    rho: &D,
    site: &[f64],
    weight: f64,
    rule: &QuadratureRule,
) -> f64 {
    let c = integrate_cell(batch, rho, rule, site);
    c.second - weight * c.mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityField;
    use crate::geometry::{clip, FacetLabel, HalfSpace};

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|j| j as f64).product()
    }

    /// Exact mean of `x^a` over the reference simplex.
    fn monomial_mean(a: &[usize]) -> f64 {
        let d = a.len();
        let total: usize = a.iter().sum();
        a.iter().map(|&k| factorial(k)).product::<f64>() * factorial(d) / factorial(total + d)
    }

    fn rule_mean(rule: &QuadratureRule, a: &[usize]) -> f64 {
        (0..rule.len())
            .map(|q| {
                let l = rule.node(q);
                rule.weights[q] * a.iter().enumerate().map(|(k, &e)| l[k + 1].powi(e as i32)).product::<f64>()
            })
            .sum()
    }

    fn exponents(d: usize, max: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0; d];
        fn rec(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k == cur.len() {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur[k] = e;
                rec(k + 1, left - e, cur, out);
            }
            cur[k] = 0;
        }
        rec(0, max, &mut cur, &mut out);
        out
    }

    #[test]
    fn rules_are_exact_up_to_their_order() {
        for d in 1..=6 {
            for q in 1..=4 {
                let rule = quadrature_rule(d, q).unwrap();
                let wsum: f64 = rule.weights().iter().sum();
                assert!((wsum - 1.0).abs() < 1e-14);
                for a in exponents(d, q) {
                    let exact = monomial_mean(&a);
                    let got = rule_mean(&rule, &a);
                    assert!((got - exact).abs() <= 1e-13 * exact, "d={d} q={q} a={a:?}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn degree_two_rule_misses_degree_three() {
        let rule = quadrature_rule(2, 2).unwrap();
        assert!((rule_mean(&rule, &[3, 0]) - monomial_mean(&[3, 0])).abs() > 1e-6);
    }

    #[test]
    fn unsupported_rules() {
        assert!(quadrature_rule(2, 5).is_err());
        assert!(quadrature_rule(7, 2).is_err());
        assert!(quadrature_rule(3, 0).is_err());
    }

    #[test]
    fn centroid_rule() {
        let r = quadrature_rule(3, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r.node(0).iter().all(|&l| (l - 0.25).abs() < 1e-16));
    }

    #[test]
    fn x_squared_over_triangle() {
        let t = ConvexPolytope::simplex(2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let batch = decompose(&t);
        let rule = quadrature_rule(2, 2).unwrap();
        let m = integrate_moments(&batch, &|x: &[f64]| x[0] * x[0], &rule);
        assert!((m.mass - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_fans_into_three() {
        let t = ConvexPolytope::simplex(2, &[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.5, 1.5]]).unwrap();
        let b = decompose(&t);
        assert_eq!(b.len(), 3);
        let shoelace = 0.5 * (2.0 * 1.5 - 0.0 * 0.5f64).abs();
        assert!((b.total_volume() - shoelace).abs() < 1e-14);
    }

    #[test]
    fn unit_square_fans_into_four() {
        let b = decompose(&ConvexPolytope::unit_cube(2).unwrap());
        assert_eq!(b.len(), 4);
        assert!((b.total_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn simplex_volume_preserved() {
        for d in 1..=6 {
            let mut pts = vec![vec![0.0; d]];
            for k in 0..d {
                let mut e = vec![0.1 * k as f64; d];
                e[k] += 1.0;
                pts.push(e);
            }
            let s = ConvexPolytope::simplex(d, &pts).unwrap();
            let flat: Vec<f64> = pts.concat();
            let direct = simplex_volume(d, &flat);
            let b = decompose(&s);
            let tol = 4.0 * f64::EPSILON * b.len() as f64;
            assert!((b.total_volume() - direct).abs() < tol * direct, "d={d}");
        }
    }

    #[test]
    fn hypercube_volumes() {
        for d in 1..=6 {
            // rounding grows with the number of simplices summed
            let b = decompose(&ConvexPolytope::unit_cube(d).unwrap());
            let v = b.total_volume();
            assert!((v - 1.0).abs() < 4.0 * f64::EPSILON * b.len() as f64, "d={d}: {v}");
        }
    }

    #[test]
    fn empty_polytope_is_degenerate() {
        let b = decompose(&ConvexPolytope::empty(3));
        assert!(b.is_empty() && b.is_degenerate());
    }

    #[test]
    fn uniform_moments_of_cube() {
        for d in 1..=5 {
            let b = decompose(&ConvexPolytope::unit_cube(d).unwrap());
            let rule = quadrature_rule(d, 1).unwrap();
            let m = integrate_moments(&b, &DensityField::uniform(), &rule);
            assert!((m.mass - 1.0).abs() < 1e-13);
            for c in m.centroid().unwrap() {
                assert!((c - 0.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn linear_density_centroid() {
        let b = decompose(&ConvexPolytope::unit_cube(2).unwrap());
        let rule = quadrature_rule(2, 2).unwrap();
        let m = integrate_moments(&b, &|x: &[f64]| x[0], &rule);
        assert!((m.mass - 0.5).abs() < 1e-15);
        let c = m.centroid().unwrap();
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((c[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_mass_has_no_centroid() {
        let b = decompose(&ConvexPolytope::unit_cube(2).unwrap());
        let rule = quadrature_rule(2, 1).unwrap();
        let m = integrate_moments(&b, &|_: &[f64]| 0.0, &rule);
        assert_eq!(m.mass, 0.0);
        assert!(m.centroid().is_none());
    }

    #[test]
    fn energy_term_examples() {
        let b = decompose(&ConvexPolytope::unit_cube(2).unwrap());
        let rule = quadrature_rule(2, 2).unwrap();
        let rho = DensityField::uniform();
        let e = integrate_energy_term(&b, &rho, &[0.5, 0.5], 0.0, &rule);
        assert!((e - 1.0 / 6.0).abs() < 1e-15);
        let shifted = integrate_energy_term(&b, &rho, &[0.5, 0.5], 0.3, &rule);
        assert!((e - shifted - 0.3).abs() < 1e-15);
        let empty = SimplexBatch::new(2);
        assert_eq!(integrate_energy_term(&empty, &rho, &[0.5, 0.5], 0.1, &rule), 0.0);
    }

    #[test]
    fn clipped_cube_volume_halves() {
        let cube = ConvexPolytope::unit_cube(3).unwrap();
        let h = HalfSpace::new(vec![0.3, -0.7, 0.2, 0.0], vec![0.5, 0.5, 0.5, 0.0], FacetLabel(0)).unwrap();
        let a = volume(&clip(&cube, &h).unwrap());
        let b = volume(&clip(&cube, &h.flipped()).unwrap());
        assert!((a + b - 1.0).abs() < 1e-13);
        assert!((a - 0.5).abs() < 1e-13);
    }
}
