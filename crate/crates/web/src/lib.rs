//! Browser bindings for a two-dimensional demo.
//!
//! Every entry point takes flat site coordinates `[x0, y0, x1, y1, ...]` in
//! the unit square and returns flat `f64` arrays, so the page needs no glue
//! beyond typed arrays. The plain functions are usable natively; the
//! `wasm_*` wrappers convert errors to JavaScript exceptions.

use powerdiag::diagram::{DiagramOptions, DomainMesh, PowerDiagram, SiteSet};
use powerdiag::transport::{lloyd_step, optimize_weights, LbfgsParams, TransportProblem};
use powerdiag::{ConvexPolytope, DensityField, Error};
use wasm_bindgen::prelude::*;

fn diagram_of(sites: &SiteSet, density: &DensityField) -> Result<PowerDiagram, Error> {
    PowerDiagram::compute(
        sites,
        &DomainMesh::unit_cube(2)?,
        density,
        &DiagramOptions::with_order(density.recommended_order()),
    )
}

/// Vertices of a polygon in boundary order, walking its edges.
fn ring(p: &ConvexPolytope) -> Vec<[f64; 2]> {
    let n = p.num_vertices();
    let mut adj = vec![Vec::with_capacity(2); n];
    for e in p.edges() {
        adj[e[0] as usize].push(e[1] as usize);
        adj[e[1] as usize].push(e[0] as usize);
    }
    let mut out = Vec::with_capacity(n);
    let (mut prev, mut cur) = (usize::MAX, 0);
    for _ in 0..n {
        let v = p.vertex(cur);
        out.push([v[0], v[1]]);
        let Some(&next) = adj[cur].iter().find(|&&w| w != prev) else {
            break;
        };
        prev = cur;
        cur = next;
    }
    out
}

/// Cells of the power diagram as `[site, mass, k, x_1, y_1, ..., x_k, y_k]`
/// records, one per nonempty cell.
pub fn power_cells(points: &[f64], weights: &[f64], density: &str) -> Result<Vec<f64>, Error> {
    let sites = SiteSet::with_weights(2, points.to_vec(), weights.to_vec())?;
    let density = DensityField::by_name(density, 2)?;
    let d = diagram_of(&sites, &density)?;
    let mut out = Vec::new();
    for (i, c) in d.cells().iter().enumerate() {
        for frag in &c.fragments {
            let r = ring(frag);
            out.extend_from_slice(&[i as f64, c.mass(), r.len() as f64]);
            out.extend(r.iter().flatten());
        }
    }
    Ok(out)
}

/// Sites after `steps` Lloyd iterations for the density.
pub fn lloyd(points: &[f64], density: &str, steps: u32) -> Result<Vec<f64>, Error> {
    let mut sites = SiteSet::new(2, points.to_vec())?;
    let density = DensityField::by_name(density, 2)?;
    for _ in 0..steps {
        let d = diagram_of(&sites, &density)?;
        let next = lloyd_step(&sites, &d);
        sites.set_points(&next);
    }
    Ok(sites.points().to_vec())
}

/// Weights that give every cell an equal share of the density's mass,
/// using at most `max_calls` diagram evaluations.
pub fn equal_mass_weights(points: &[f64], density: &str, max_calls: u32) -> Result<Vec<f64>, Error> {
    let sites = SiteSet::new(2, points.to_vec())?;
    let density = DensityField::by_name(density, 2)?;
    let order = density.energy_order();
    let problem = TransportProblem::new(sites, density, order)?;
    let params = LbfgsParams {
        max_calls: max_calls.max(1) as usize,
        ..LbfgsParams::default()
    };
    let r = optimize_weights(&problem, &params)?;
    Ok(r.sites.weights().to_vec())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = powerCells)]
pub fn wasm_power_cells(points: &[f64], weights: &[f64], density: &str) -> Result<Vec<f64>, JsError> {
    power_cells(points, weights, density).map_err(js)
}

#[wasm_bindgen(js_name = lloyd)]
pub fn wasm_lloyd(points: &[f64], density: &str, steps: u32) -> Result<Vec<f64>, JsError> {
    lloyd(points, density, steps).map_err(js)
}

#[wasm_bindgen(js_name = equalMassWeights)]
pub fn wasm_equal_mass_weights(points: &[f64], density: &str, max_calls: u32) -> Result<Vec<f64>, JsError> {
    equal_mass_weights(points, density, max_calls).map_err(js)
}
