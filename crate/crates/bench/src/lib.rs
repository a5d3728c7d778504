//! Shared fixtures for the benchmarks.

use pbrom::{parse_pqr, DiscreteSystem, Molecule, SystemConfig};

const ACET18: &str = include_str!("../../core/data/acet18.pqr");

pub fn molecule() -> Molecule {
    parse_pqr(ACET18).expect("fixture parses")
}

pub fn system(n: usize) -> DiscreteSystem {
    DiscreteSystem::build(&molecule(), &SystemConfig { n, ..Default::default() }).expect("fixture system")
}

/// Training set used throughout: eleven points on `[0.05, 0.15]`.
pub fn training() -> Vec<f64> {
    (0..11).map(|i| 0.05 + 0.01 * i as f64).collect()
}
