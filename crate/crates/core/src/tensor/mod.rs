//! Canonical tensors and the range-separated Newton kernel.

pub mod canonical;
pub mod newton;
pub mod quadrature;

pub use canonical::{CanonicalTensor, RankOneTerm};
pub use newton::{
    assemble_long_range, assemble_short_range, atom_nodes, coulomb_weights, default_long_rank,
    kernel_scale, reference_newton_tensor, shift_and_window, split_range, CumulatedShortRange,
    RangeSplit, ShortWindow,
};
pub use quadrature::{build_quadrature, QuadratureRule};
