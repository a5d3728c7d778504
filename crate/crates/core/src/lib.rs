//! Regularized Poisson–Boltzmann electrostatics on uniform grids with a
//! reduced-basis surrogate for ionic-strength sweeps.
//!
//! The singular Coulomb part of the potential is represented by a
//! range-separated canonical tensor; only the smooth long-range remainder is
//! solved for on the grid. Many-query studies over the ionic strength use a
//! greedy reduced basis whose nonaffine boundary term is compressed by
//! discrete empirical interpolation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod deim;
pub mod error;
pub mod fom;
pub mod grid;
pub mod io;
pub mod linear;
pub mod molecule;
pub mod operators;
pub mod rbm;
pub mod system;
pub mod tensor;

pub use deim::{build_deim, build_snapshots, select_indices, thin_svd, CutoffMode, DeimBasis, SnapshotMatrix, ThinSvd};
pub use error::{Error, Result};
pub use fom::{newton_oracle, nonlinear_residual, solve_fom, FomOptions, FomProblem, IterationTrace, Model};
pub use grid::{
    classify_regions, dielectric_field, kappa_squared_field, make_grid, CoefficientField, GridSpec,
    KappaField, Region, RegionMask,
};
pub use molecule::{bounding_box, parse_pqr, scaled_charge, Atom, Molecule, PhysicalConstants, UnitSystem};
pub use io::{DxGrid, RomArchive, RomHeader};
pub use linear::{LinearSolverOptions, Pcg, Preconditioner, SpdSolver};
pub use operators::{BoundaryGenerator, DebyeHuckel, StencilOperator};
pub use rbm::{
    greedy_build, orthonormalize, reconstruct, residual_estimator, GreedyOptions, GreedyOutcome, GreedyRecord,
    ReducedBasis, ReducedModel, RomOptions, RomSolution, RomTrace,
};
pub use system::{system_hash, DiscreteSystem, FomSolution, SystemConfig};
pub use tensor::{CanonicalTensor, QuadratureRule, RangeSplit};
