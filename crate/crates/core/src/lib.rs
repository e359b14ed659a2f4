//! Reduced two-dimensional Ginzburg-Landau energy of type-I superconductors on
//! the flat torus, its lattice discretization, and the constructions around its
//! sharp-interface limit.

pub mod energy;
pub mod error;
pub mod field;
pub mod grid;
pub mod json;
pub mod optimize;
pub mod params;
pub mod polygeom;
pub mod profile1d;
pub mod recovery;
pub mod reduce;
pub mod snapshot;

pub use error::{Gl2dError, Result};
pub use field::{bogomolny, Configuration, LinkField, C64};
pub use grid::{DomainKind, Grid};
pub use params::{admissible_epsilons, make_params, nondimensionalize, Params};
