//! Assembly of the complete discrete problem for one molecule.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fom::{solve_fom, FomOptions, FomProblem, IterationTrace, Model};
use crate::grid::{classify_regions, dielectric_field, kappa_squared_field, make_grid, GridSpec, RegionMask};
use crate::molecule::{bounding_box, Molecule, PhysicalConstants};
use crate::operators::{
    boundary_node_field, ionic_diagonal, regularized_source, singular_source, stiffness, BoundaryGenerator,
    DebyeHuckel, StencilOperator,
};
use crate::tensor::{
    assemble_long_range, assemble_short_range, build_quadrature, coulomb_weights, default_long_rank,
    reference_newton_tensor, split_range, CanonicalTensor, CumulatedShortRange, QuadratureRule,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Nodes per axis (odd).
    pub n: usize,
    /// Fixed cube half-length in Å; when absent the box is
    /// `bounding_box(molecule, expansion)`.
    pub half_length: Option<f64>,
    pub expansion: f64,
    pub eps_molecular: f64,
    pub eps_solvent: f64,
    pub constants: PhysicalConstants,
    pub quadrature_m: usize,
    pub quadrature_c0: f64,
    /// Long-range rank `R_l`; chosen from the smallest radius when absent.
    pub long_rank: Option<usize>,
    /// Width of an ion-exclusion layer around the atoms, if any.
    pub ion_probe: Option<f64>,
    /// Short-range window radius in units of the atomic radius.
    pub short_window: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n: 33,
            half_length: None,
            expansion: 3.0,
            eps_molecular: 2.0,
            eps_solvent: 78.54,
            constants: PhysicalConstants::default(),
            quadrature_m: 25,
            quadrature_c0: 3.0,
            long_rank: None,
            ion_probe: None,
            short_window: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteSystem {
    pub config: SystemConfig,
    /// Molecule translated so that its centroid is the origin.
    pub molecule: Molecule,
    pub grid: GridSpec,
    pub mask: RegionMask,
    pub a1: StencilOperator,
    /// Unit-strength ionic diagonal.
    pub a2: Vec<f64>,
    pub boundary: BoundaryGenerator,
    pub rule: QuadratureRule,
    pub long_rank: usize,
    pub long_range: CanonicalTensor,
    pub short_range: CumulatedShortRange,
    pub b1r: Vec<f64>,
    pub b_sing: Vec<f64>,
    hash: String,
}

/// Converged full-order solution on the interior unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct FomSolution {
    pub model: Model,
    pub ionic_strength: f64,
    pub interior: Vec<f64>,
    pub trace: IterationTrace,
}

impl DiscreteSystem {
    pub fn build(molecule: &Molecule, config: &SystemConfig) -> Result<Self> {
        config.constants.validate()?;
        let hash = system_hash(molecule, config)?;
        let molecule = molecule.centered();
        let half_length = match config.half_length {
            Some(b) => b,
            None => bounding_box(&molecule, config.expansion),
        };
        let grid = make_grid(half_length, config.n)?;
        let mask = classify_regions(&grid, &molecule, config.ion_probe);
        let eps = dielectric_field(&grid, &mask, config.eps_molecular, config.eps_solvent)?;
        let (a1, coupling) = stiffness(&grid, &eps);
        let kappa = kappa_squared_field(&mask, 1.0, &config.constants, config.eps_solvent)?;
        let a2 = ionic_diagonal(&grid, &kappa.unit)?;
        let boundary = BoundaryGenerator::new(
            grid.num_interior(),
            DebyeHuckel::new(&molecule, &config.constants, config.eps_solvent),
            coupling,
        )?;

        let rule = build_quadrature(config.quadrature_m, config.quadrature_c0)?;
        let reference = reference_newton_tensor(&grid, &rule);
        let long_rank = match config.long_rank {
            Some(r) => r,
            None => default_long_rank(&reference, &grid, molecule.min_radius(), config.short_window),
        };
        let split = split_range(&reference, long_rank)?;
        let weights = coulomb_weights(&molecule, &config.constants, config.eps_molecular);
        let long_range = assemble_long_range(&molecule, &split, &grid, &weights)?;
        let short_range = assemble_short_range(&molecule, &split, &grid, &weights, config.short_window)?;
        let b1r = regularized_source(&grid, &long_range, config.eps_molecular);
        let b_sing = singular_source(&molecule, &grid, &config.constants)?;
        log::debug!(
            "assembled system: n = {}, b = {:.4} Å, h = {:.4} Å, R_l = {}, rank(P_l) = {}",
            grid.n,
            grid.half_length,
            grid.h,
            long_rank,
            long_range.rank()
        );
        Ok(Self {
            config: config.clone(),
            molecule,
            grid,
            mask,
            a1,
            a2,
            boundary,
            rule,
            long_rank,
            long_range,
            short_range,
            b1r,
            b_sing,
            hash,
        })
    }

    /// Number of interior unknowns.
    pub fn dim(&self) -> usize {
        self.a1.dim()
    }

    /// SHA-256 over the centred molecule and the configuration.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Parameter-independent source: `b1r` for regularized models,
    /// the point-charge source otherwise.
    pub fn source(&self, model: Model) -> &[f64] {
        if model.is_regularized() {
            &self.b1r
        } else {
            &self.b_sing
        }
    }

    pub fn rhs(&self, model: Model, ionic_strength: f64) -> Vec<f64> {
        let b2 = self.boundary.vector(ionic_strength);
        self.source(model).iter().zip(b2).map(|(a, b)| a + b).collect()
    }

    pub fn problem(&self, model: Model, ionic_strength: f64) -> Result<FomProblem<'_>> {
        if !(ionic_strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ionic strength must be non-negative, got {ionic_strength}"
            )));
        }
        Ok(FomProblem {
            model,
            a1: &self.a1,
            a2: &self.a2,
            rhs: self.rhs(model, ionic_strength),
            ionic_strength,
        })
    }

    pub fn solve(&self, model: Model, ionic_strength: f64, options: &FomOptions) -> Result<FomSolution> {
        let problem = self.problem(model, ionic_strength)?;
        let (interior, trace) = solve_fom(&problem, options)?;
        Ok(FomSolution {
            model,
            ionic_strength,
            interior,
            trace,
        })
    }

    /// Node field of a solution with Debye–Hückel values on the boundary.
    pub fn node_field(&self, interior: &[f64], ionic_strength: f64) -> Vec<f64> {
        let boundary = boundary_node_field(&self.grid, &self.boundary.field, ionic_strength);
        self.grid.extend_from_interior(interior, Some(&boundary))
    }

    /// Total electrostatic potential on the nodes: `P_s + u^r` for
    /// regularized models, the solution itself for classical ones.
    pub fn total_potential(&self, model: Model, interior: &[f64], ionic_strength: f64) -> Vec<f64> {
        let field = self.node_field(interior, ionic_strength);
        if model.is_regularized() {
            crate::fom::total_potential(&field, &self.short_range.field)
        } else {
            field
        }
    }
}

/// Provenance hash of a system: SHA-256 over the centred atoms and the
/// configuration. Cheap; does not assemble anything.
pub fn system_hash(molecule: &Molecule, config: &SystemConfig) -> Result<String> {
    let payload = serde_json::json!({
        "atoms": molecule.centered().atoms,
        "config": config,
    });
    let bytes = serde_json::to_vec(&payload)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::norm;
    use crate::molecule::Atom;

    fn small() -> Molecule {
        Molecule::from_atoms(vec![
            Atom {
                position: [0.0, 0.0, 0.0],
                charge: 0.5,
                radius: 1.8,
            },
            Atom {
                position: [1.0, 0.0, 0.0],
                charge: -0.3,
                radius: 1.5,
            },
        ])
        .unwrap()
    }

    fn config(n: usize) -> SystemConfig {
        SystemConfig {
            n,
            half_length: Some(8.0),
            ..Default::default()
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = DiscreteSystem::build(&small(), &config(9)).unwrap();
        let b = DiscreteSystem::build(&small(), &config(9)).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = DiscreteSystem::build(&small(), &config(11)).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(system_hash(&small(), &config(9)).unwrap(), a.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn far_field_is_regular_part() {
        let sys = DiscreteSystem::build(&small(), &config(17)).unwrap();
        let sol = sys.solve(Model::Nrpbe, 0.1, &FomOptions::default()).unwrap();
        let total = sys.total_potential(Model::Nrpbe, &sol.interior, 0.1);
        let regular = sys.node_field(&sol.interior, 0.1);
        let g = sys.grid;
        for idx in 0..g.num_nodes() {
            let (i, j, k) = g.node_ijk(idx);
            let near_boundary = [i, j, k].iter().any(|&c| c <= 1 || c + 2 >= g.n);
            if near_boundary {
                assert!((total[idx] - regular[idx]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_charge_linear_model_is_zero() {
        let mol = small().with_charges_scaled(0.0);
        let sys = DiscreteSystem::build(&mol, &config(9)).unwrap();
        let sol = sys.solve(Model::Lpbe, 0.1, &FomOptions::default()).unwrap();
        assert!(sys.total_potential(Model::Lpbe, &sol.interior, 0.1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn regularized_and_classical_far_fields_agree() {
        // Atoms land on nodes after centring, so snapping is exact.
        let sys = DiscreteSystem::build(&small(), &config(33)).unwrap();
        let opts = FomOptions::default();
        let reg = sys.solve(Model::Nrpbe, 0.1, &opts).unwrap();
        let cls = sys.solve(Model::Npbe, 0.1, &opts).unwrap();
        let ur = sys.total_potential(Model::Nrpbe, &reg.interior, 0.1);
        let uc = sys.total_potential(Model::Npbe, &cls.interior, 0.1);
        let (mut num, mut den) = (0.0, 0.0);
        for idx in 0..sys.grid.num_nodes() {
            let x = sys.grid.node_position(idx);
            let far = sys.molecule.atoms.iter().all(|a| {
                let d2: f64 = (0..3).map(|d| (x[d] - a.position[d]).powi(2)).sum();
                d2 >= 9.0
            });
            if far {
                num += (ur[idx] - uc[idx]).powi(2);
                den += uc[idx].powi(2);
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 0.05, "{rel}");
        assert!(norm(&reg.interior) > 0.0);
    }
}
