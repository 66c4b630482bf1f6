//! Numerical laboratory for partially segregated three-component elliptic
//! systems: penalized solvers, the explicit limit, harmonic-difference
//! partitions and free-boundary comparison.

pub mod bc_catalog;
pub mod elliptic;
pub mod experiment;
pub mod grid;
pub mod interface_lab;
pub mod io;
pub mod partition;
pub mod systems;

pub use grid::{BoundarySpec, BoundaryValues, Edge, Grid, ScalarField};
