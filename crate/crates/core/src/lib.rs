//! Restricted power diagrams in two to six dimensions, with quantization and
//! semi-discrete optimal transport built on top.
//!
//! Cells are computed one site at a time by clipping a simple polytope
//! against bisector halfspaces of lifted sites. Integrals over cells use a
//! simplicial decomposition and fixed-order simplex quadrature.

pub mod density;
pub mod diagram;
pub mod geometry;
pub mod io;
pub mod neighbors;
pub mod quadrature;
pub mod sampling;
pub mod slicer;
pub mod transport;

use thiserror::Error;

pub use density::{Density, DensityField, DensityKind};
pub use diagram::{compute_cell, compute_diagram, lift_sites, DiagramOptions, DomainMesh, PowerCell, PowerDiagram, SiteSet, Timings};
pub use geometry::{ConvexPolytope, FacetLabel, GeometryError, HalfSpace, Side};
pub use neighbors::{NeighborCache, NeighborError, NeighborParams};
pub use quadrature::{QuadratureError, QuadratureRule};
pub use slicer::{slice_diagram, SliceMesh, SliceSpec};
pub use transport::{
    energy, grad_sites, grad_weights, lbfgs_minimize, lloyd_step, optimize_points, optimize_weights, LbfgsParams,
    QuantizeConfig, QuantizeMode, TransportProblem,
};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
