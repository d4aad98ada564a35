//! Allen–Cahn phase-field laboratory for interior weak mean curvature flow:
//! grids and fields, initial shapes, the phase-field solver, barrier and
//! energy diagnostics, leaf shooting, and a level-set reference flow.

pub mod ac;
pub mod barriers;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod lsf;
pub mod shooting;

pub use error::{Error, Result};
pub use grid::{Boundary, Extension, Grid, ScalarField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
