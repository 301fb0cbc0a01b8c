//! Random-field XY model on `ℤ²` with a weak Gaussian field along `e₂`.
//!
//! Modules, from the bottom up:
//! - [`lattice`]: finite site sets, boundaries, block grids and hulls.
//! - [`spin`]: configurations, Hamiltonians and model scales.
//! - [`field`]: spectral Dirichlet/Neumann resolvents and field statistics.
//! - [`coarse`]: phase labels, bad sites and contours.
//! - [`classify`]: clean/dirty boxes from field samples.
//! - [`surgery`]: the contour-removal map and its energy bookkeeping.
//! - [`sampler`]: heat-bath and Metropolis chains.
//! - [`harness`]: reproducible experiments with deterministic output files.

pub mod classify;
pub mod coarse;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod lattice;
pub mod sampler;
pub mod spin;
pub mod surgery;

pub use error::{Error, Result};
