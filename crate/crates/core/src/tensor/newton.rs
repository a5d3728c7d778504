//! Range-separated canonical representation of the Newton kernel `1/‖x‖`
//! and its multiparticle long/short-range assembly.
//!
//! The reference tensor lives on the `2n - 1` grid offsets `-(n-1)..=(n-1)`
//! (in units of `h`), so that shifting it onto any atom node of the `n`-node
//! grid is a plain slice of each factor vector.

use rayon::prelude::*;

use super::canonical::{CanonicalTensor, RankOneTerm};
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::molecule::{Molecule, PhysicalConstants};

/// Length used to normalize distances before applying the quadrature: the
/// diagonal of the computational cube.
pub fn kernel_scale(grid: &GridSpec) -> f64 {
    2.0 * 3f64.sqrt() * grid.half_length
}

/// Average of `exp(-alpha x²)` over the cell `[c - h/2, c + h/2]`.
fn cell_average(alpha: f64, c: f64, h: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    let s = alpha.sqrt();
    let (a, b) = (c - 0.5 * h, c + 0.5 * h);
    let scale = std::f64::consts::PI.sqrt() / (2.0 * s * h);
    let integral = if a >= 0.0 {
        libm::erfc(s * a) - libm::erfc(s * b)
    } else if b <= 0.0 {
        libm::erfc(-s * b) - libm::erfc(-s * a)
    } else {
        libm::erf(s * b) + libm::erf(-s * a)
    };
    scale * integral
}

/// Folded canonical tensor of `1/r` on the reference offsets of `grid`,
/// one term per quadrature index `k = 0..=M`. Factor entries are cell
/// averages of the one-dimensional Gaussians.
pub fn reference_newton_tensor(grid: &GridSpec, rule: &QuadratureRule) -> CanonicalTensor {
    let len = 2 * grid.n - 1;
    let center = (grid.n - 1) as f64;
    let scale = kernel_scale(grid);
    let mut tensor = CanonicalTensor::new(len);
    for k in 0..rule.folded_rank() {
        let alpha = rule.exponents[k] / (scale * scale);
        let factor: Vec<f64> = (0..len)
            .map(|d| cell_average(alpha, (d as f64 - center) * grid.h, grid.h))
            .collect();
        tensor.push(RankOneTerm {
            weight: rule.weights[k] / scale,
            index: k,
            factors: [factor.clone(), factor.clone(), factor],
        });
    }
    tensor
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeSplit {
    /// Terms `k = 0..=R_l`.
    pub long: CanonicalTensor,
    /// Terms `k = R_l+1..=M`.
    pub short: CanonicalTensor,
    pub long_rank: usize,
}

pub fn split_range(full: &CanonicalTensor, long_rank: usize) -> Result<RangeSplit> {
    if long_rank >= full.rank() {
        return Err(Error::InvalidSplit {
            long_rank,
            rank: full.rank(),
        });
    }
    let mut long = CanonicalTensor::new(full.n);
    let mut short = CanonicalTensor::new(full.n);
    for t in &full.terms {
        if t.index <= long_rank {
            long.push(t.clone());
        } else {
            short.push(t.clone());
        }
    }
    Ok(RangeSplit {
        long,
        short,
        long_rank,
    })
}

/// Smallest `R_l` for which the short-range part, evaluated at the node
/// distance `ceil(window · σ_min / h)` along an axis, is at most `1e-4` of its
/// value at the origin.
pub fn default_long_rank(reference: &CanonicalTensor, grid: &GridSpec, min_radius: f64, window: f64) -> usize {
    let c = grid.n - 1;
    let reach = ((window * min_radius / grid.h).ceil() as usize).min(c);
    let at = |t: &RankOneTerm, d: usize| t.weight * t.factors[0][c + d] * t.factors[1][c] * t.factors[2][c];
    let rank = reference.rank();
    for r in 0..rank {
        let tail = &reference.terms[r + 1..];
        let peak: f64 = tail.iter().map(|t| at(t, 0)).sum();
        let edge: f64 = tail.iter().map(|t| at(t, reach)).sum();
        if edge <= 1e-4 * peak || tail.is_empty() {
            return r;
        }
    }
    rank - 1
}

/// Per-atom kernel weights `q_i / (4π ε_m) = ℓ_B z_i / ε_m`, so that the
/// weighted kernel is the Coulomb potential in a uniform medium `ε_m`.
pub fn coulomb_weights(mol: &Molecule, consts: &PhysicalConstants, eps_molecular: f64) -> Vec<f64> {
    let lb = consts.bjerrum_length();
    mol.atoms.iter().map(|a| lb * a.charge / eps_molecular).collect()
}

/// Node each atom is snapped to.
pub fn atom_nodes(mol: &Molecule, grid: &GridSpec) -> Result<Vec<[usize; 3]>> {
    mol.atoms
        .iter()
        .enumerate()
        .map(|(index, a)| {
            grid.nearest_node(a.position).ok_or(Error::AtomOutOfDomain {
                index,
                position: a.position,
            })
        })
        .collect()
}

/// Shift-and-window sum `Σ_i w_i 𝒲_i(reference)` on the `n`-node grid.
pub fn shift_and_window(
    reference: &CanonicalTensor,
    centers: &[[usize; 3]],
    weights: &[f64],
    grid: &GridSpec,
) -> CanonicalTensor {
    let n = grid.n;
    assert_eq!(reference.n, 2 * n - 1, "reference tensor does not match the grid");
    let mut out = CanonicalTensor::new(n);
    for (c, w) in centers.iter().zip(weights) {
        for t in &reference.terms {
            let factors = std::array::from_fn(|a| {
                let start = n - 1 - c[a];
                t.factors[a][start..start + n].to_vec()
            });
            out.push(RankOneTerm {
                weight: t.weight * w,
                index: t.index,
                factors,
            });
        }
    }
    out
}

/// Multiparticle long-range potential `P_l`, rank `(R_l + 1) N_m`.
pub fn assemble_long_range(
    mol: &Molecule,
    split: &RangeSplit,
    grid: &GridSpec,
    weights: &[f64],
) -> Result<CanonicalTensor> {
    let centers = atom_nodes(mol, grid)?;
    Ok(shift_and_window(&split.long, &centers, weights, grid))
}

/// Localized short-range contribution of one atom: nodes within `cutoff`
/// of `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortWindow {
    pub center: [usize; 3],
    pub radius_nodes: usize,
    pub cutoff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulatedShortRange {
    pub windows: Vec<ShortWindow>,
    pub weights: Vec<f64>,
    /// Assembled node field `P_s`.
    pub field: Vec<f64>,
}

/// Cumulated short-range potential `P_s`; the part of atom `i` is kept on
/// nodes within `window · σ_i` of its node.
pub fn assemble_short_range(
    mol: &Molecule,
    split: &RangeSplit,
    grid: &GridSpec,
    weights: &[f64],
    window: f64,
) -> Result<CumulatedShortRange> {
    let centers = atom_nodes(mol, grid)?;
    let n = grid.n as i64;
    let c = n - 1;
    let windows: Vec<ShortWindow> = mol
        .atoms
        .iter()
        .zip(&centers)
        .map(|(a, center)| {
            let cutoff = window * a.radius;
            ShortWindow {
                center: *center,
                radius_nodes: (cutoff / grid.h).ceil() as usize,
                cutoff,
            }
        })
        .collect();

    let contributions: Vec<Vec<(usize, f64)>> = windows
        .par_iter()
        .zip(weights)
        .map(|(win, &w)| {
            let mut out = Vec::new();
            if w == 0.0 || split.short.rank() == 0 {
                return out;
            }
            let r = win.radius_nodes as i64;
            let limit = (win.cutoff / grid.h).powi(2) * (1.0 + 1e-12);
            let ctr = win.center.map(|v| v as i64);
            for dx in -r..=r {
                let i = ctr[0] + dx;
                if i < 0 || i >= n {
                    continue;
                }
                for dy in -r..=r {
                    let j = ctr[1] + dy;
                    if j < 0 || j >= n {
                        continue;
                    }
                    for dz in -r..=r {
                        let k = ctr[2] + dz;
                        if k < 0 || k >= n || ((dx * dx + dy * dy + dz * dz) as f64) > limit {
                            continue;
                        }
                        let v: f64 = split
                            .short
                            .terms
                            .iter()
                            .map(|t| {
                                t.weight
                                    * t.factors[0][(c + dx) as usize]
                                    * t.factors[1][(c + dy) as usize]
                                    * t.factors[2][(c + dz) as usize]
                            })
                            .sum();
                        out.push((grid.node_index(i as usize, j as usize, k as usize), w * v));
                    }
                }
            }
            out
        })
        .collect();

    let mut field = vec![0.0; grid.num_nodes()];
    for list in contributions {
        for (idx, v) in list {
            field[idx] += v;
        }
    }
    Ok(CumulatedShortRange {
        windows,
        weights: weights.to_vec(),
        field,
    })
}
