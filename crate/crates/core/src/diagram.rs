//! Restricted power diagrams.
//!
//! Weighted sites are lifted one dimension up so that the power diagram
//! becomes the Voronoi diagram of the lifted sites restricted to the domain
//! (which sits at height zero). Each cell is then computed independently by
//! clipping the domain element against bisectors of increasingly distant
//! neighbors until the security radius rules out any further cut.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use web_time::{Duration, Instant};

use crate::density::Density;
use crate::geometry::{clip, security_radius, ConvexPolytope, FacetLabel, GeometryError, HalfSpace};
use crate::neighbors::{NeighborCache, NeighborError, NeighborParams};
use crate::quadrature::{decompose, integrate_cell, CellIntegrals, QuadratureRule};
use crate::Error;

/// `z_i = (y_i, sqrt(max(w) - w_i))`, flat with stride `dim + 1`.
pub fn lift_sites(dim: usize, points: &[f64], weights: &[f64]) -> Vec<f64> {
    let wmax = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = Vec::with_capacity(weights.len() * (dim + 1));
    for (y, &w) in points.chunks(dim).zip(weights) {
        z.extend_from_slice(y);
        z.push((wmax - w).max(0.0).sqrt());
    }
    z
}

/// Sites with weights and their lifted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    lifted: Vec<f64>,
}

impl SiteSet {
    /// Unweighted sites from flat coordinates (stride `dim`).
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self, Error> {
        let n = if dim == 0 { 0 } else { points.len() / dim };
        Self::with_weights(dim, points, vec![0.0; n])
    }

    pub fn with_weights(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self, Error> {
        if dim == 0 || dim > crate::geometry::MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim).into());
        }
        if points.len() % dim != 0 || points.len() / dim != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} coordinates and {} weights do not describe sites in {dim} dimensions",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("site coordinates and weights must be finite".into()));
        }
        let lifted = lift_sites(dim, &points, &weights);
        Ok(Self {
            dim,
            points,
            weights,
            lifted,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lifted(&self, i: usize) -> &[f64] {
        let a = self.dim + 1;
        &self.lifted[i * a..(i + 1) * a]
    }

    pub fn lifted_coords(&self) -> &[f64] {
        &self.lifted
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        assert_eq!(weights.len(), self.len());
        self.weights.copy_from_slice(weights);
        self.lifted = lift_sites(self.dim, &self.points, &self.weights);
    }

    pub fn set_points(&mut self, points: &[f64]) {
        assert_eq!(points.len(), self.points.len());
        self.points.copy_from_slice(points);
        self.lifted = lift_sites(self.dim, &self.points, &self.weights);
    }

    /// Power distance `|x - y_i|^2 - w_i`.
    pub fn power_distance(&self, i: usize, x: &[f64]) -> f64 {
        let d2: f64 = self.point(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 - self.weights[i]
    }

    pub fn neighbor_cache(&self, params: NeighborParams) -> NeighborCache {
        NeighborCache::build(self.lifted.clone(), self.dim + 1, params)
    }
}

/// The domain as a list of convex elements sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMesh {
    dim: usize,
    elements: Vec<ConvexPolytope>,
}

impl DomainMesh {
    pub fn new(elements: Vec<ConvexPolytope>) -> Result<Self, Error> {
        let dim = elements
            .first()
            .map(ConvexPolytope::dim)
            .ok_or_else(|| Error::InvalidInput("a domain needs at least one element".into()))?;
        if elements.iter().any(|e| e.dim() != dim || e.is_empty()) {
            return Err(Error::InvalidInput("domain elements must be nonempty and share a dimension".into()));
        }
        if elements.iter().any(|e| e.vertices().any(|x| x[dim] != 0.0)) {
            return Err(Error::InvalidInput("domain vertices must have a zero lifted coordinate".into()));
        }
        Ok(Self { dim, elements })
    }

    pub fn unit_cube(dim: usize) -> Result<Self, Error> {
        Self::new(vec![ConvexPolytope::unit_cube(dim)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[ConvexPolytope] {
        &self.elements
    }

    /// Integral of `density` over the whole domain at quadrature `order`.
    pub fn mass<D: Density + ?Sized>(&self, density: &D, order: usize) -> Result<f64, Error> {
        let rule = QuadratureRule::new(self.dim, order)?;
        let origin = vec![0.0; self.dim];
        Ok(self
            .elements
            .iter()
            .map(|e| integrate_cell(&decompose(e), density, &rule, &origin).mass)
            .sum())
    }
}

/// Seconds spent per stage, summed over sites.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    /// Clipping, excluding neighbor queries.
    pub vor: f64,
    /// Building the index and materializing neighbor lists.
    pub knn: f64,
    /// Simplicial decomposition.
    pub tri: f64,
    /// Quadrature.
    pub quad: f64,
    /// Wall-clock time of the whole computation.
    pub total: f64,
}

impl Timings {
    fn add(&mut self, o: &Timings) {
        self.vor += o.vor;
        self.knn += o.knn;
        self.tri += o.tri;
        self.quad += o.quad;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramOptions {
    /// Quadrature order.
    pub order: usize,
    pub neighbors: NeighborParams,
    /// Keep the clipped polytopes (needed for slicing and inspection).
    pub keep_cells: bool,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        Self {
            order: 2,
            neighbors: NeighborParams::default(),
            keep_cells: true,
        }
    }
}

impl DiagramOptions {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }
}

/// One restricted power cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCell {
    /// One polytope per intersected domain element.
    pub fragments: Vec<ConvexPolytope>,
    pub integrals: CellIntegrals,
    pub num_vertices: usize,
    pub num_facets: usize,
}

impl PowerCell {
    pub fn mass(&self) -> f64 {
        self.integrals.mass
    }

    pub fn is_empty(&self) -> bool {
        self.num_vertices == 0
    }

    /// Density-weighted centroid; `None` for massless cells.
    pub fn centroid(&self) -> Option<Vec<f64>> {
        let m = self.integrals.mass;
        (m > 0.0).then(|| self.integrals.moment.iter().map(|x| x / m).collect())
    }

    /// Facet labels of the cell that are bisectors (neighboring sites).
    pub fn bisector_neighbors(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .fragments
            .iter()
            .flat_map(|f| f.facet_labels())
            .filter(|l| l.is_bisector())
            .map(|l| l.0 as usize)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerDiagram {
    dim: usize,
    cells: Vec<PowerCell>,
    timings: Timings,
}

impl PowerDiagram {
    /// Builds the neighbor index and computes the diagram.
    pub fn compute<D: Density + ?Sized>(
        sites: &SiteSet,
        mesh: &DomainMesh,
        density: &D,
        options: &DiagramOptions,
    ) -> Result<Self, Error> {
        let start = Instant::now();
        let cache = sites.neighbor_cache(options.neighbors);
        let build = start.elapsed().as_secs_f64();
        let mut diagram = compute_diagram(sites, mesh, &cache, density, options)?;
        diagram.timings.knn += build;
        diagram.timings.total = start.elapsed().as_secs_f64();
        Ok(diagram)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[PowerCell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &PowerCell {
        &self.cells[i]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    pub fn masses(&self) -> Vec<f64> {
        self.cells.iter().map(PowerCell::mass).collect()
    }

    /// Sum of cell masses, accumulated in site order.
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(PowerCell::mass).sum()
    }

    pub fn total_vertices(&self) -> usize {
        self.cells.iter().map(|c| c.num_vertices).sum()
    }

    pub fn total_facets(&self) -> usize {
        self.cells.iter().map(|c| c.num_facets).sum()
    }

    pub fn num_empty(&self) -> usize {
        self.cells.iter().filter(|c| c.is_empty()).count()
    }
}

/// Clips `element` down to the power cell of site `i`.
///
/// Neighbors are visited in order of increasing lifted distance; clipping
/// stops once the next neighbor is at least a security radius away, the
/// cell vanishes, or every other site has been used.
pub fn compute_cell(
    i: usize,
    sites: &SiteSet,
    element: &ConvexPolytope,
    cache: &mut NeighborCache,
) -> Result<ConvexPolytope, Error> {
    let mut t = Timings::default();
    compute_cell_timed(i, sites, element, cache, &mut t)
}

fn compute_cell_timed(
    i: usize,
    sites: &SiteSet,
    element: &ConvexPolytope,
    cache: &mut NeighborCache,
    timings: &mut Timings,
) -> Result<ConvexPolytope, Error> {
    let zi = sites.lifted(i);
    let mut cell = element.clone();
    let mut radius = security_radius(zi, &cell)?;
    let mut rank = 1;
    let mut clip_time = Duration::ZERO;
    let mut knn_time = Duration::ZERO;
    loop {
        let t0 = Instant::now();
        let next = cache.next_neighbor(i, rank);
        knn_time += t0.elapsed();
        let j = match next {
            Ok(j) => j,
            Err(NeighborError::Exhausted { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        rank += 1;
        let t0 = Instant::now();
        let zj = sites.lifted(j);
        let dist: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist >= radius {
            clip_time += t0.elapsed();
            break;
        }
        let h = match HalfSpace::bisector(zi, zj, FacetLabel(j as i32)) {
            Ok(h) => h,
            // coincident sites: no bisector
            Err(GeometryError::ZeroNormal) => continue,
            Err(e) => return Err(e.into()),
        };
        match clip(&cell, &h) {
            Ok(c) => {
                if c.num_vertices() != cell.num_vertices() || c.coords() != cell.coords() {
                    radius = security_radius(zi, &c)?;
                }
                cell = c;
            }
            Err(GeometryError::EmptyResult) => {
                cell = ConvexPolytope::empty(element.dim());
                clip_time += t0.elapsed();
                break;
            }
            Err(e) => return Err(e.into()),
        }
        clip_time += t0.elapsed();
    }
    timings.vor += clip_time.as_secs_f64();
    timings.knn += knn_time.as_secs_f64();
    Ok(cell)
}

struct SiteResult {
    cell: PowerCell,
    timings: Timings,
}

fn compute_site<D: Density + ?Sized>(
    i: usize,
    sites: &SiteSet,
    mesh: &DomainMesh,
    cache: &mut NeighborCache,
    density: &D,
    rule: &QuadratureRule,
    keep: bool,
) -> Result<SiteResult, Error> {
    let mut timings = Timings::default();
    let mut integrals = CellIntegrals::zero(sites.dim());
    let mut fragments = Vec::new();
    let mut num_vertices = 0;
    let mut labels: Vec<FacetLabel> = Vec::new();
    for element in mesh.elements() {
        let cell = compute_cell_timed(i, sites, element, cache, &mut timings)?;
        if cell.is_empty() {
            continue;
        }
        let t0 = Instant::now();
        let batch = decompose(&cell);
        timings.tri += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        integrals.add(&integrate_cell(&batch, density, rule, sites.point(i)));
        timings.quad += t0.elapsed().as_secs_f64();
        num_vertices += cell.num_vertices();
        labels.extend(cell.facet_labels());
        if keep {
            fragments.push(cell);
        }
    }
    cache.release(i);
    labels.sort_unstable();
    labels.dedup();
    Ok(SiteResult {
        cell: PowerCell {
            fragments,
            integrals,
            num_vertices,
            num_facets: labels.len(),
        },
        timings,
    })
}

/// Computes every restricted cell with its mass, moment and energy integral.
///
/// Sites are processed in parallel; results are stored and reduced in site
/// order so the output does not depend on the number of workers.
pub fn compute_diagram<D: Density + ?Sized>(
    sites: &SiteSet,
    mesh: &DomainMesh,
    cache: &NeighborCache,
    density: &D,
    options: &DiagramOptions,
) -> Result<PowerDiagram, Error> {
    if sites.is_empty() {
        return Err(Error::InvalidInput("a diagram needs at least one site".into()));
    }
    if sites.dim() != mesh.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: mesh.dim(),
            got: sites.dim(),
        }
        .into());
    }
    if cache.num_sites() != sites.len() || cache.index().dim() != sites.dim() + 1 {
        return Err(Error::InvalidInput("neighbor cache was built for different sites".into()));
    }
    let start = Instant::now();
    let rule = QuadratureRule::new(sites.dim(), options.order)?;
    let n = sites.len();
    let keep = options.keep_cells;

    #[cfg(feature = "parallel")]
    let results: Vec<Result<SiteResult, Error>> = (0..n)
        .into_par_iter()
        .map_init(
            || cache.fork(),
            |c, i| compute_site(i, sites, mesh, c, density, &rule, keep),
        )
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<SiteResult, Error>> = {
        let mut c = cache.fork();
        (0..n)
            .map(|i| compute_site(i, sites, mesh, &mut c, density, &rule, keep))
            .collect()
    };

    let mut timings = Timings::default();
    let mut cells = Vec::with_capacity(n);
    for r in results {
        let r = r?;
        timings.add(&r.timings);
        cells.push(r.cell);
    }
    timings.total = start.elapsed().as_secs_f64();
    Ok(PowerDiagram {
        dim: sites.dim(),
        cells,
        timings,
    })
}
