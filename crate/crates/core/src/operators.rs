//! Finite-difference operators and right-hand sides on the interior unknowns.
//!
//! Unknowns are the `m³` interior nodes (`m = n - 2`) with the `z` index
//! fastest. Dirichlet nodes are eliminated: their couplings are kept in a
//! [`BoundaryCoupling`] list and enter only through `b2(μ)`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CoefficientField, GridSpec};
use crate::molecule::{Molecule, PhysicalConstants};
use crate::tensor::{CanonicalTensor, RankOneTerm};

/// Symmetric 7-point operator. `off[a][p]` is the matrix entry between
/// unknown `p` and its `+a` neighbour (zero on the last layer along `a`).
#[derive(Clone, Debug, PartialEq)]
pub struct StencilOperator {
    pub m: usize,
    pub diag: Vec<f64>,
    pub off: [Vec<f64>; 3],
    pub symmetric: bool,
}

impl StencilOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    fn strides(&self) -> [usize; 3] {
        [self.m * self.m, self.m, 1]
    }

    /// `y = (A + diag(extra)) x`.
    pub fn apply_shifted(&self, x: &[f64], extra: Option<&[f64]>, y: &mut [f64]) {
        let m = self.m;
        let s = self.strides();
        y.par_chunks_mut(m).enumerate().for_each(|(line, out)| {
            let (i, j) = (line / m, line % m);
            let base = line * m;
            for (k, yk) in out.iter_mut().enumerate() {
                let p = base + k;
                let mut d = self.diag[p];
                if let Some(e) = extra {
                    d += e[p];
                }
                let mut v = d * x[p];
                if i + 1 < m {
                    v += self.off[0][p] * x[p + s[0]];
                }
                if i > 0 {
                    v += self.off[0][p - s[0]] * x[p - s[0]];
                }
                if j + 1 < m {
                    v += self.off[1][p] * x[p + s[1]];
                }
                if j > 0 {
                    v += self.off[1][p - s[1]] * x[p - s[1]];
                }
                if k + 1 < m {
                    v += self.off[2][p] * x[p + 1];
                }
                if k > 0 {
                    v += self.off[2][p - 1] * x[p - 1];
                }
                *yk = v;
            }
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_shifted(x, None, &mut y);
        y
    }

    /// Coordinate-format entries `(row, col, value)`, rows ascending.
    pub fn to_coo(&self) -> Vec<(usize, usize, f64)> {
        let m = self.m;
        let s = self.strides();
        let mut out = Vec::with_capacity(7 * self.dim());
        for p in 0..self.dim() {
            let ijk = [p / (m * m), (p / m) % m, p % m];
            let mut row = vec![(p, self.diag[p])];
            for a in 0..3 {
                if ijk[a] > 0 {
                    row.push((p - s[a], self.off[a][p - s[a]]));
                }
                if ijk[a] + 1 < m {
                    row.push((p + s[a], self.off[a][p]));
                }
            }
            row.sort_by_key(|e| e.0);
            out.extend(row.into_iter().map(|(c, v)| (p, c, v)));
        }
        out
    }

    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        for (r, c, v) in self.to_coo() {
            writeln!(w, "{r} {c} {v:.17e}")?;
        }
        Ok(())
    }
}

/// Discrete Laplacian `A_Δ = Δ₁⊗I⊗I + I⊗Δ₂⊗I + I⊗I⊗Δ₃` with homogeneous
/// Dirichlet data (diagonal `-6/h²`, neighbours `1/h²`).
pub fn kron_laplacian(grid: &GridSpec) -> StencilOperator {
    let m = grid.m();
    let dim = m * m * m;
    let h2 = grid.h * grid.h;
    let strides = [m * m, m, 1];
    let off = std::array::from_fn(|a| {
        (0..dim)
            .map(|p| {
                let along = (p / strides[a]) % m;
                if along + 1 < m {
                    1.0 / h2
                } else {
                    0.0
                }
            })
            .collect()
    });
    StencilOperator {
        m,
        diag: vec![-6.0 / h2; dim],
        off,
        symmetric: true,
    }
}

/// `A_Δ` applied to a full node field (boundary values included), returned
/// on the interior nodes.
pub fn laplacian_nodes(grid: &GridSpec, field: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    (0..grid.num_interior())
        .into_par_iter()
        .map(|p| {
            let idx = grid.interior_to_node(p);
            let c = field[idx];
            let sum = field[idx + n * n] + field[idx - n * n] + field[idx + n] + field[idx - n] + field[idx + 1]
                + field[idx - 1];
            (sum - 6.0 * c) * inv_h2
        })
        .collect()
}

/// Second difference of a factor vector on interior entries; zero at the ends.
fn second_difference(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let inv_h2 = 1.0 / (h * h);
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv_h2
            }
        })
        .collect()
}

/// `A_Δ t` in canonical form (rank `3R`). Valid on interior nodes.
pub fn laplacian_canonical(t: &CanonicalTensor, h: f64) -> CanonicalTensor {
    let mut out = CanonicalTensor::new(t.n);
    for term in &t.terms {
        for a in 0..3 {
            let mut factors = term.factors.clone();
            factors[a] = second_difference(&term.factors[a], h);
            out.push(RankOneTerm {
                weight: term.weight,
                index: term.index,
                factors,
            });
        }
    }
    out
}

/// Link between an interior unknown and an eliminated Dirichlet node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub row: usize,
    /// Index into [`BoundaryCoupling::nodes`].
    pub slot: usize,
    /// `ε_face / h²`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoupling {
    /// Couplings sorted by row.
    pub links: Vec<Coupling>,
    /// Boundary node indices referenced by the links, ascending.
    pub nodes: Vec<usize>,
    /// Positions of those nodes.
    pub positions: Vec<[f64; 3]>,
}

impl BoundaryCoupling {
    /// Links belonging to interior row `p`.
    pub fn links_of(&self, p: usize) -> &[Coupling] {
        let lo = self.links.partition_point(|c| c.row < p);
        let hi = self.links.partition_point(|c| c.row <= p);
        &self.links[lo..hi]
    }
}

/// Flux-conservative stiffness `-∇·(ε∇·)` with Dirichlet rows eliminated.
pub fn stiffness(grid: &GridSpec, eps: &CoefficientField) -> (StencilOperator, BoundaryCoupling) {
    let n = grid.n;
    let dim = grid.num_interior();
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let node_strides = [n * n, n, 1];
    let mut diag = vec![0.0; dim];
    let mut off: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut raw_links = Vec::new();
    for p in 0..dim {
        let idx = grid.interior_to_node(p);
        let (i, j, k) = grid.node_ijk(idx);
        let ijk = [i, j, k];
        for a in 0..3 {
            let s = node_strides[a];
            let plus = eps.faces[a][idx] * inv_h2;
            let minus = eps.faces[a][idx - s] * inv_h2;
            diag[p] += plus + minus;
            if ijk[a] + 1 == n - 1 {
                raw_links.push((p, idx + s, plus));
            } else {
                off[a][p] = -plus;
            }
            if ijk[a] == 1 {
                raw_links.push((p, idx - s, minus));
            }
        }
    }
    let mut nodes: Vec<usize> = raw_links.iter().map(|l| l.1).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let links = raw_links
        .into_iter()
        .map(|(row, node, value)| Coupling {
            row,
            slot: nodes.binary_search(&node).unwrap(),
            value,
        })
        .collect();
    let positions = nodes.iter().map(|&v| grid.node_position(v)).collect();
    (
        StencilOperator {
            m: grid.m(),
            diag,
            off,
            symmetric: true,
        },
        BoundaryCoupling {
            links,
            nodes,
            positions,
        },
    )
}

/// Interior entries of the unit-strength ionic field `κ̄²/μ`.
pub fn ionic_diagonal(grid: &GridSpec, unit_field: &[f64]) -> Result<Vec<f64>> {
    let d = grid.restrict_to_interior(unit_field);
    if let Some(v) = d.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidCoefficient(format!(
            "ionic coefficient must be non-negative, got {v}"
        )));
    }
    Ok(d)
}

/// Regularized source `b1r = -ε_m A_Δ P_l` on the interior nodes.
pub fn regularized_source(grid: &GridSpec, long_range: &CanonicalTensor, eps_molecular: f64) -> Vec<f64> {
    if long_range.rank() == 0 {
        return vec![0.0; grid.num_interior()];
    }
    let field = long_range.materialize();
    laplacian_nodes(grid, &field)
        .into_iter()
        .map(|v| -eps_molecular * v)
        .collect()
}

/// Point charges `q_i` spread trilinearly onto the eight surrounding nodes
/// and divided by `h³`; weights landing on boundary nodes are dropped.
pub fn singular_source(mol: &Molecule, grid: &GridSpec, consts: &PhysicalConstants) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.num_interior()];
    let inv_h3 = 1.0 / grid.h.powi(3);
    let last = (grid.n - 1) as f64;
    for (index, atom) in mol.atoms.iter().enumerate() {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = (atom.position[d] + grid.half_length) / grid.h;
            if !(s >= -1e-9 && s <= last + 1e-9) {
                return Err(Error::AtomOutOfDomain {
                    index,
                    position: atom.position,
                });
            }
            let s = s.clamp(0.0, last);
            let b = (s.floor() as usize).min(grid.n - 2);
            base[d] = b;
            frac[d] = s - b as f64;
        }
        let q = consts.scale_charge(atom.charge) * inv_h3;
        for corner in 0..8 {
            let bits = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for d in 0..3 {
                w *= if bits[d] == 1 { frac[d] } else { 1.0 - frac[d] };
                ijk[d] = base[d] + bits[d];
            }
            if w == 0.0 || grid.is_boundary_ijk(ijk[0], ijk[1], ijk[2]) {
                continue;
            }
            out[grid.interior_index(ijk[0], ijk[1], ijk[2])] += q * w;
        }
    }
    Ok(out)
}

/// Debye–Hückel far field of the molecule,
/// `g(x) = Σ_i ℓ_B z_i exp(-κ (d_i - a_i)) / (ε_s (1 + κ a_i) d_i)`,
/// with the exponent clamped at zero when `d_i < a_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebyeHuckel {
    pub centers: Vec<[f64; 3]>,
    /// `q_i / 4π = ℓ_B z_i`.
    pub strengths: Vec<f64>,
    pub radii: Vec<f64>,
    pub eps_solvent: f64,
    pub consts: PhysicalConstants,
}

impl DebyeHuckel {
    pub fn new(mol: &Molecule, consts: &PhysicalConstants, eps_solvent: f64) -> Self {
        Self {
            centers: mol.atoms.iter().map(|a| a.position).collect(),
            strengths: mol
                .atoms
                .iter()
                .map(|a| consts.scale_charge(a.charge) / (4.0 * PI))
                .collect(),
            radii: mol.atoms.iter().map(|a| a.radius).collect(),
            eps_solvent,
            consts: *consts,
        }
    }

    pub fn kappa(&self, ionic_strength: f64) -> f64 {
        self.consts.kappa(ionic_strength, self.eps_solvent)
    }

    pub fn value(&self, x: [f64; 3], kappa: f64) -> f64 {
        let mut g = 0.0;
        for ((c, q), a) in self.centers.iter().zip(&self.strengths).zip(&self.radii) {
            let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
            g += q * (-kappa * (d - a).max(0.0)).exp() / (self.eps_solvent * (1.0 + kappa * a) * d);
        }
        g
    }

    fn check_clear(&self, positions: &[[f64; 3]], nodes: &[usize]) -> Result<()> {
        for (x, node) in positions.iter().zip(nodes) {
            for (index, c) in self.centers.iter().enumerate() {
                if x == c {
                    return Err(Error::BoundaryClash { index, node: *node });
                }
            }
        }
        Ok(())
    }
}

/// Generator of the boundary vector `b2(μ)` and of selected entries of it.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundaryGenerator {
    pub dim: usize,
    pub field: DebyeHuckel,
    pub coupling: BoundaryCoupling,
    #[serde(skip)]
    evaluated: AtomicUsize,
}

impl Clone for BoundaryGenerator {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            field: self.field.clone(),
            coupling: self.coupling.clone(),
            evaluated: AtomicUsize::new(self.evaluations()),
        }
    }
}

impl PartialEq for BoundaryGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.field == other.field && self.coupling == other.coupling
    }
}

impl BoundaryGenerator {
    pub fn new(dim: usize, field: DebyeHuckel, coupling: BoundaryCoupling) -> Result<Self> {
        field.check_clear(&coupling.positions, &coupling.nodes)?;
        Ok(Self {
            dim,
            field,
            coupling,
            evaluated: AtomicUsize::new(0),
        })
    }

    /// Dirichlet values at the coupled boundary nodes.
    pub fn boundary_values(&self, ionic_strength: f64) -> Vec<f64> {
        let kappa = self.field.kappa(ionic_strength);
        self.coupling
            .positions
            .par_iter()
            .map(|x| self.field.value(*x, kappa))
            .collect()
    }

    /// Full interior vector `b2(μ)`.
    pub fn vector(&self, ionic_strength: f64) -> Vec<f64> {
        let g = self.boundary_values(ionic_strength);
        let mut out = vec![0.0; self.dim];
        for l in &self.coupling.links {
            out[l.row] += l.value * g[l.slot];
        }
        self.evaluated.fetch_add(self.dim, Ordering::Relaxed);
        out
    }

    /// Entries of `b2(μ)` at the given interior rows only.
    pub fn entries(&self, ionic_strength: f64, rows: &[usize]) -> Vec<f64> {
        let kappa = self.field.kappa(ionic_strength);
        self.evaluated.fetch_add(rows.len(), Ordering::Relaxed);
        rows.iter()
            .map(|&p| {
                self.coupling
                    .links_of(p)
                    .iter()
                    .map(|l| l.value * self.field.value(self.coupling.positions[l.slot], kappa))
                    .sum()
            })
            .collect()
    }

    /// Copy holding only the links of `rows`, sufficient for [`Self::entries`].
    pub fn restrict(&self, rows: &[usize]) -> Self {
        let mut links = Vec::new();
        let mut nodes = Vec::new();
        let mut positions = Vec::new();
        let mut sorted = rows.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for p in sorted {
            for l in self.coupling.links_of(p) {
                let node = self.coupling.nodes[l.slot];
                let slot = match nodes.iter().position(|v| *v == node) {
                    Some(s) => s,
                    None => {
                        nodes.push(node);
                        positions.push(self.coupling.positions[l.slot]);
                        nodes.len() - 1
                    }
                };
                links.push(Coupling {
                    row: l.row,
                    slot,
                    value: l.value,
                });
            }
        }
        Self {
            dim: self.dim,
            field: self.field.clone(),
            coupling: BoundaryCoupling {
                links,
                nodes,
                positions,
            },
            evaluated: AtomicUsize::new(0),
        }
    }

    /// Number of `b2` entries produced so far.
    pub fn evaluations(&self) -> usize {
        self.evaluated.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluated.store(0, Ordering::Relaxed);
    }
}

/// Debye–Hückel values on every boundary node of `grid` (zero inside).
pub fn boundary_node_field(grid: &GridSpec, field: &DebyeHuckel, ionic_strength: f64) -> Vec<f64> {
    let kappa = field.kappa(ionic_strength);
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = grid.node_ijk(idx);
            if grid.is_boundary_ijk(i, j, k) {
                field.value(grid.node_position(idx), kappa)
            } else {
                0.0
            }
        })
        .collect()
}
