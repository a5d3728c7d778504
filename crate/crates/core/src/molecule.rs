//! PQR parsing, physical constants and per-atom source weights.
//!
//! A PQR file is a PDB file whose occupancy and temperature-factor columns
//! are replaced by the partial charge and radius of each atom. Column layout
//! differs between generators (chain identifiers are optional), so records
//! are read by taking the final five numeric tokens as `x y z q r`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Units in which lengths and potentials are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitSystem {
    /// CGS-Gaussian electrostatics with lengths in Å; potentials are
    /// dimensionless (`e_c φ / k_B T`).
    CgsGaussianAngstrom,
}

/// Physical constants used to scale charges and the Debye–Hückel parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Absolute temperature in K.
    pub temperature: f64,
    /// Boltzmann constant in erg/K.
    pub boltzmann: f64,
    /// Elementary charge in statcoulomb.
    pub electron_charge: f64,
    /// Avogadro constant in 1/mol.
    pub avogadro: f64,
    pub units: UnitSystem,
}

/// Square centimetres to square ångström.
const CM2_TO_A2: f64 = 1.0e16;
const CM_TO_A: f64 = 1.0e8;

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            temperature: 298.15,
            boltzmann: 1.380_649e-16,
            electron_charge: 4.803_204_712_570_263e-10,
            avogadro: 6.022_140_76e23,
            units: UnitSystem::CgsGaussianAngstrom,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.temperature,
            self.boltzmann,
            self.electron_charge,
            self.avogadro,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "physical constants must be positive: {self:?}"
            )))
        }
    }

    /// `e_c² / (k_B T)` in Å (the vacuum Bjerrum length).
    pub fn bjerrum_length(&self) -> f64 {
        self.electron_charge * self.electron_charge / (self.boltzmann * self.temperature) * CM_TO_A
    }

    /// Source weight `4π e_c² z / (k_B T)` of a point charge `z` (in Å).
    pub fn scale_charge(&self, z: f64) -> f64 {
        4.0 * PI * self.bjerrum_length() * z
    }

    /// Debye–Hückel parameter squared, `8π N_A e_c² I / (1000 ε_s k_B T)`, in Å⁻².
    pub fn kappa_squared(&self, ionic_strength: f64, eps_solvent: f64) -> f64 {
        8.0 * PI * self.avogadro * self.electron_charge * self.electron_charge * ionic_strength
            / (1000.0 * eps_solvent * self.boltzmann * self.temperature)
            / CM2_TO_A2
    }

    pub fn kappa(&self, ionic_strength: f64, eps_solvent: f64) -> f64 {
        self.kappa_squared(ionic_strength, eps_solvent).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Cartesian position in Å.
    pub position: [f64; 3],
    /// Partial charge in units of the elementary charge.
    pub charge: f64,
    /// Atomic radius in Å.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub source_path: String,
}

/// Source weight `q_i` of one atom.
pub fn scaled_charge(atom: &Atom, consts: &PhysicalConstants) -> f64 {
    consts.scale_charge(atom.charge)
}

fn is_record(token: &str) -> bool {
    token == "ATOM" || token == "HETATM"
}

/// Parse PQR text into a molecule.
pub fn parse_pqr(text: &str) -> Result<Molecule> {
    let mut atoms = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first() {
            Some(t) if is_record(t) => {}
            _ => continue,
        }
        if tokens.len() < 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least x y z q r after the record name, got {line:?}"),
            });
        }
        let tail = &tokens[tokens.len() - 5..];
        let mut values = [0.0f64; 5];
        for (slot, (token, name)) in values
            .iter_mut()
            .zip(tail.iter().zip(["x", "y", "z", "charge", "radius"]))
        {
            *slot = token.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric {name} token {token:?}"),
            })?;
            if !slot.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite {name} token {token:?}"),
                });
            }
        }
        let [x, y, z, q, r] = values;
        if r <= 0.0 {
            return Err(Error::InvalidRadius {
                line: line_no,
                radius: r,
            });
        }
        atoms.push(Atom {
            position: [x, y, z],
            charge: q,
            radius: r,
        });
    }
    if atoms.is_empty() {
        return Err(Error::EmptyMolecule);
    }
    Ok(Molecule {
        atoms,
        source_path: String::new(),
    })
}

impl Molecule {
    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMolecule);
        }
        for atom in &atoms {
            if !(atom.radius > 0.0) {
                return Err(Error::InvalidRadius {
                    line: 0,
                    radius: atom.radius,
                });
            }
        }
        Ok(Self {
            atoms,
            source_path: String::new(),
        })
    }

    pub fn read_pqr(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut mol = parse_pqr(&text)?;
        mol.source_path = path.display().to_string();
        Ok(mol)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_charge(&self) -> f64 {
        self.atoms.iter().map(|a| a.charge).sum()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.atoms.len() as f64;
        let mut c = [0.0; 3];
        for a in &self.atoms {
            for d in 0..3 {
                c[d] += a.position[d];
            }
        }
        c.map(|v| v / n)
    }

    /// Copy of the molecule translated so its centroid is at the origin.
    pub fn centered(&self) -> Self {
        let c = self.centroid();
        let mut out = self.clone();
        for a in &mut out.atoms {
            for d in 0..3 {
                a.position[d] -= c[d];
            }
        }
        out
    }

    /// Same atoms with every charge multiplied by `factor`.
    pub fn with_charges_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.charge *= factor;
        }
        out
    }

    pub fn max_radius(&self) -> f64 {
        self.atoms.iter().map(|a| a.radius).fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.atoms.iter().map(|a| a.radius).fold(f64::INFINITY, f64::min)
    }

    /// Serialize back to PQR. Numbers are written with enough digits to
    /// reparse to the same `f64`.
    pub fn to_pqr(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.atoms.iter().enumerate() {
            let _ = writeln!(
                out,
                "ATOM {:>6} X    MOL     1 {:?} {:?} {:?} {:?} {:?}",
                i + 1,
                a.position[0],
                a.position[1],
                a.position[2],
                a.charge,
                a.radius
            );
        }
        out.push_str("END\n");
        out
    }

    /// Provenance echo: `{"source": ..., "atoms": [{"x","y","z","q","r"}, ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let atoms: Vec<serde_json::Value> = self
            .atoms
            .iter()
            .map(|a| {
                serde_json::json!({
                    "x": a.position[0],
                    "y": a.position[1],
                    "z": a.position[2],
                    "q": a.charge,
                    "r": a.radius,
                })
            })
            .collect();
        serde_json::json!({ "source": self.source_path, "atoms": atoms })
    }
}

/// Half-length of an axis-aligned cube around the centroid that contains
/// every atom sphere, enlarged by `expansion`.
pub fn bounding_box(mol: &Molecule, expansion: f64) -> f64 {
    let c = mol.centroid();
    let extent = mol
        .atoms
        .iter()
        .map(|a| {
            (0..3)
                .map(|d| (a.position[d] - c[d]).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    expansion.max(1.0) * (extent + mol.max_radius())
}
