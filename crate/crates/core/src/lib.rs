//! Canonical duality toolkit for sums of squared quadratics.
//!
//! The core pipeline is [`quartic`] (the primal), [`dual`] (its canonical
//! dual) and [`solver`] (certified ascent and critical-point search).
//! [`mdgp`] compiles distance-geometry instances into that pipeline,
//! [`chain`] replicates fibril chains from solved positions, and [`energy`]
//! holds Lennard-Jones style pair potentials and a local refiner. File
//! formats live in [`io`]; [`fixtures`] bundles the reference instances.

// `!(x > 0.0)` is the NaN-rejecting form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod dual;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod mdgp;
pub mod quartic;
pub mod solver;

pub use dual::{DualGeometry, DualVector, Region};
pub use error::{Error, Result};
pub use quartic::{QuadraticMap, QuarticProgram, QuarticTerm};
pub use solver::{CriticalPoint, PointKind, SearchBox, SolveReport, SolverConfig, SolverError};
