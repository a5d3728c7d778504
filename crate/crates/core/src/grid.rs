//! Uniform node-centred Cartesian grid, molecular/solvent classification and
//! the piecewise-constant coefficient fields.
//!
//! Nodes sit at `-b + i h`, `i = 0..n`, with `h = 2b/(n-1)` and odd `n`, so the
//! origin is always a node. Node fields are flat `n³` arrays with the `z`
//! index running fastest: `idx = (i n + j) n + k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molecule::{Molecule, PhysicalConstants};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_length: f64,
    pub n: usize,
    pub h: f64,
}

pub fn make_grid(half_length: f64, n: usize) -> Result<GridSpec> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!(
            "nodes per dimension must be odd and >= 3, got {n}"
        )));
    }
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "half-length must be positive, got {half_length}"
        )));
    }
    Ok(GridSpec {
        half_length,
        n,
        h: 2.0 * half_length / (n - 1) as f64,
    })
}

impl GridSpec {
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.h
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Interior nodes per axis.
    pub fn m(&self) -> usize {
        self.n - 2
    }

    pub fn num_interior(&self) -> usize {
        let m = self.m();
        m * m * m
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn node_ijk(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.node_ijk(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Flat interior index of interior node `(i, j, k)` (each in `1..n-1`).
    #[inline]
    pub fn interior_index(&self, i: usize, j: usize, k: usize) -> usize {
        let m = self.m();
        ((i - 1) * m + (j - 1)) * m + (k - 1)
    }

    #[inline]
    pub fn interior_to_node(&self, p: usize) -> usize {
        let m = self.m();
        let (i, j, k) = (p / (m * m) + 1, (p / m) % m + 1, p % m + 1);
        self.node_index(i, j, k)
    }

    pub fn is_boundary_ijk(&self, i: usize, j: usize, k: usize) -> bool {
        let last = self.n - 1;
        i == 0 || j == 0 || k == 0 || i == last || j == last || k == last
    }

    /// Gather an interior vector from a full node field.
    pub fn restrict_to_interior(&self, field: &[f64]) -> Vec<f64> {
        (0..self.num_interior())
            .map(|p| field[self.interior_to_node(p)])
            .collect()
    }

    /// Scatter an interior vector into a node field, filling boundary nodes
    /// from `boundary` (or zero).
    pub fn extend_from_interior(&self, interior: &[f64], boundary: Option<&[f64]>) -> Vec<f64> {
        let mut out = match boundary {
            Some(b) => b.to_vec(),
            None => vec![0.0; self.num_nodes()],
        };
        for (p, v) in interior.iter().enumerate() {
            out[self.interior_to_node(p)] = *v;
        }
        out
    }

    /// Nearest node to a point, or `None` if the point is outside `[-b, b]³`.
    pub fn nearest_node(&self, x: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for d in 0..3 {
            let s = (x[d] + self.half_length) / self.h;
            if !(s > -0.5 - 1e-9 && s < (self.n - 1) as f64 + 0.5 + 1e-9) || !s.is_finite() {
                return None;
            }
            if x[d].abs() > self.half_length * (1.0 + 1e-12) {
                return None;
            }
            out[d] = s.round().clamp(0.0, (self.n - 1) as f64) as usize;
        }
        Some(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Molecular,
    Solvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub labels: Vec<Region>,
    /// Solvent nodes within the ion-exclusion layer (only when configured).
    pub ion_excluded: Option<Vec<bool>>,
    /// Set when no atom sphere touches any node.
    pub molecule_outside: bool,
}

impl RegionMask {
    pub fn molecular_count(&self) -> usize {
        self.labels.iter().filter(|r| **r == Region::Molecular).count()
    }

    /// Nodes where mobile ions are present.
    pub fn is_ionic(&self, idx: usize) -> bool {
        self.labels[idx] == Region::Solvent
            && self.ion_excluded.as_ref().is_none_or(|ex| !ex[idx])
    }
}

/// Label a node molecular when it lies inside (or on) any van der Waals sphere.
/// With `ion_probe = Some(p)`, solvent nodes within `radius + p` of an atom
/// are additionally flagged as ion-excluded.
pub fn classify_regions(grid: &GridSpec, mol: &Molecule, ion_probe: Option<f64>) -> RegionMask {
    let mut labels = vec![Region::Solvent; grid.num_nodes()];
    let mut excluded = ion_probe.map(|_| vec![false; grid.num_nodes()]);
    let mut touched = false;
    let coords = grid.coords();
    for atom in &mol.atoms {
        let reach = atom.radius + ion_probe.unwrap_or(0.0);
        let range = |d: usize| {
            let lo = ((atom.position[d] - reach + grid.half_length) / grid.h).floor();
            let hi = ((atom.position[d] + reach + grid.half_length) / grid.h).ceil();
            let lo = lo.max(0.0) as usize;
            let hi = hi.min((grid.n - 1) as f64);
            if hi < 0.0 {
                return lo..lo;
            }
            lo..(hi as usize + 1)
        };
        for i in range(0) {
            let dx = coords[i] - atom.position[0];
            for j in range(1) {
                let dy = coords[j] - atom.position[1];
                for k in range(2) {
                    let dz = coords[k] - atom.position[2];
                    let r2 = dx * dx + dy * dy + dz * dz;
                    let idx = grid.node_index(i, j, k);
                    if r2 <= atom.radius * atom.radius {
                        labels[idx] = Region::Molecular;
                        touched = true;
                    } else if let Some(ex) = excluded.as_mut() {
                        if r2 <= reach * reach {
                            ex[idx] = true;
                        }
                    }
                }
            }
        }
    }
    if !touched {
        log::warn!("no atom sphere intersects the grid; the mask is all solvent");
    }
    RegionMask {
        labels,
        ion_excluded: excluded,
        molecule_outside: !touched,
    }
}

/// Node-centred coefficient values plus per-axis face values. `faces[a][idx]`
/// is the coefficient on the face between node `idx` and its `+a` neighbour
/// (entries on the last layer along `a` are unused).
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub nodes: Vec<f64>,
    pub faces: [Vec<f64>; 3],
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a == b {
        a
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn dielectric_field(
    grid: &GridSpec,
    mask: &RegionMask,
    eps_molecular: f64,
    eps_solvent: f64,
) -> Result<CoefficientField> {
    if !(eps_molecular > 0.0 && eps_solvent > 0.0) {
        return Err(Error::InvalidCoefficient(format!(
            "dielectric constants must be positive (eps_m = {eps_molecular}, eps_s = {eps_solvent})"
        )));
    }
    let nodes: Vec<f64> = mask
        .labels
        .iter()
        .map(|r| match r {
            Region::Molecular => eps_molecular,
            Region::Solvent => eps_solvent,
        })
        .collect();
    let n = grid.n;
    let strides = [n * n, n, 1];
    let faces = std::array::from_fn(|axis| {
        let stride = strides[axis];
        (0..nodes.len())
            .map(|idx| {
                let (i, j, k) = grid.node_ijk(idx);
                let along = [i, j, k][axis];
                if along + 1 < n {
                    harmonic(nodes[idx], nodes[idx + stride])
                } else {
                    nodes[idx]
                }
            })
            .collect()
    });
    Ok(CoefficientField { nodes, faces })
}

/// Ionic screening coefficient `κ̄² = ε_s κ²(μ)` on ion-accessible nodes and
/// zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaField {
    pub at_strength: Vec<f64>,
    /// The same field at unit ionic strength; `at_strength = μ · unit`.
    pub unit: Vec<f64>,
}

pub fn kappa_squared_field(
    mask: &RegionMask,
    ionic_strength: f64,
    consts: &PhysicalConstants,
    eps_solvent: f64,
) -> Result<KappaField> {
    if !(ionic_strength >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ionic strength must be non-negative, got {ionic_strength}"
        )));
    }
    let unit_value = eps_solvent * consts.kappa_squared(1.0, eps_solvent);
    let unit: Vec<f64> = (0..mask.labels.len())
        .map(|idx| if mask.is_ionic(idx) { unit_value } else { 0.0 })
        .collect();
    let at_strength = unit.iter().map(|v| ionic_strength * v).collect();
    Ok(KappaField { at_strength, unit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::Atom;
    use approx::assert_relative_eq;

    fn one_atom(radius: f64) -> Molecule {
        Molecule::from_atoms(vec![Atom {
            position: [0.0; 3],
            charge: 1.0,
            radius,
        }])
        .unwrap()
    }

    #[test]
    fn grid_spacing() {
        assert_relative_eq!(make_grid(30.0, 129).unwrap().h, 0.46875);
        assert_relative_eq!(make_grid(16.0, 97).unwrap().h, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(make_grid(1.0, 3).unwrap().coords(), vec![-1.0, 0.0, 1.0]);
        assert!(matches!(make_grid(1.0, 4), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(1.0, 1), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn index_maps_round_trip() {
        let g = make_grid(2.0, 7).unwrap();
        for p in 0..g.num_interior() {
            let (i, j, k) = g.node_ijk(g.interior_to_node(p));
            assert!(!g.is_boundary_ijk(i, j, k));
            assert_eq!(g.interior_index(i, j, k), p);
        }
    }

    #[test]
    fn classify_single_sphere() {
        let g = make_grid(4.0, 9).unwrap(); // h = 1
        let mask = classify_regions(&g, &one_atom(2.0), None);
        assert_eq!(mask.labels[g.node_index(5, 4, 4)], Region::Molecular); // distance 1
        assert_eq!(mask.labels[g.node_index(6, 4, 4)], Region::Molecular); // distance 2 (on the sphere)
        assert_eq!(mask.labels[g.node_index(4, 4, 7)], Region::Solvent); // distance 3
        assert!(!mask.molecule_outside);
    }

    #[test]
    fn molecular_volume_matches_sphere() {
        // Oracle: Monte-Carlo estimate of the ball volume (independent of the grid).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples = 400_000;
        let hits = (0..samples)
            .filter(|_| {
                let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
                p.iter().map(|v| v * v).sum::<f64>() <= 4.0
            })
            .count();
        let mc_volume = 64.0 * hits as f64 / samples as f64;

        let g = make_grid(4.0, 33).unwrap(); // h = 0.25
        let mask = classify_regions(&g, &one_atom(2.0), None);
        let grid_volume = mask.molecular_count() as f64 * g.h.powi(3);
        assert!((grid_volume / mc_volume - 1.0).abs() < 0.05);
    }

    #[test]
    fn dielectric_faces() {
        let g = make_grid(4.0, 9).unwrap();
        let all_solvent = RegionMask {
            labels: vec![Region::Solvent; g.num_nodes()],
            ion_excluded: None,
            molecule_outside: true,
        };
        let f = dielectric_field(&g, &all_solvent, 2.0, 78.54).unwrap();
        assert!(f.nodes.iter().all(|v| *v == 78.54));
        assert!(f.faces.iter().flatten().all(|v| *v == 78.54));

        let mask = classify_regions(&g, &one_atom(1.0), None);
        let f = dielectric_field(&g, &mask, 2.0, 78.54).unwrap();
        // node (5,4,4) is at distance 1 (molecular), (6,4,4) at distance 2 (solvent)
        let face = f.faces[0][g.node_index(5, 4, 4)];
        assert_relative_eq!(face, 2.0 * 2.0 * 78.54 / (2.0 + 78.54), epsilon = 1e-12);
        assert!((face - 3.9007).abs() < 1e-4);

        let same = dielectric_field(&g, &mask, 5.0, 5.0).unwrap();
        assert!(same.faces.iter().flatten().all(|v| *v == 5.0));

        assert!(matches!(
            dielectric_field(&g, &mask, 0.0, 78.54),
            Err(Error::InvalidCoefficient(_))
        ));
    }

    #[test]
    fn face_values_bounded_by_neighbours() {
        let g = make_grid(4.0, 17).unwrap();
        let mask = classify_regions(&g, &one_atom(2.3), None);
        let f = dielectric_field(&g, &mask, 2.0, 78.54).unwrap();
        for v in f.faces.iter().flatten() {
            assert!(*v >= 2.0 - 1e-12 && *v <= 78.54 + 1e-12);
        }
    }

    #[test]
    fn kappa_field_properties() {
        let g = make_grid(4.0, 9).unwrap();
        let c = PhysicalConstants::default();
        let mask = classify_regions(&g, &one_atom(2.0), None);
        let zero = kappa_squared_field(&mask, 0.0, &c, 78.54).unwrap();
        assert!(zero.at_strength.iter().all(|v| *v == 0.0));
        let a = kappa_squared_field(&mask, 0.1, &c, 78.54).unwrap();
        let b = kappa_squared_field(&mask, 0.2, &c, 78.54).unwrap();
        for idx in 0..g.num_nodes() {
            assert_relative_eq!(b.at_strength[idx], 2.0 * a.at_strength[idx]);
            if mask.labels[idx] == Region::Molecular {
                assert_eq!(a.at_strength[idx], 0.0);
            } else {
                assert_relative_eq!(a.at_strength[idx], 78.54 * c.kappa_squared(0.1, 78.54));
            }
            assert_eq!(a.at_strength[idx], 0.1 * a.unit[idx]);
        }
        assert!(matches!(
            kappa_squared_field(&mask, -0.1, &c, 78.54),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn ion_exclusion_layer() {
        let g = make_grid(4.0, 9).unwrap();
        let mask = classify_regions(&g, &one_atom(1.0), Some(1.5));
        let c = PhysicalConstants::default();
        let k = kappa_squared_field(&mask, 0.1, &c, 78.54).unwrap();
        // distance 2: solvent but inside the exclusion layer
        let idx = g.node_index(6, 4, 4);
        assert_eq!(mask.labels[idx], Region::Solvent);
        assert_eq!(k.at_strength[idx], 0.0);
        assert!(k.at_strength[g.node_index(8, 4, 4)] > 0.0);
    }

    #[test]
    fn centrosymmetric_masks_are_symmetric() {
        let g = make_grid(5.0, 11).unwrap();
        let mol = Molecule::from_atoms(vec![
            Atom { position: [1.3, 0.4, -0.7], charge: 1.0, radius: 1.6 },
            Atom { position: [-1.3, -0.4, 0.7], charge: 1.0, radius: 1.6 },
        ])
        .unwrap();
        let mask = classify_regions(&g, &mol, None);
        let f = dielectric_field(&g, &mask, 2.0, 78.54).unwrap();
        let n = g.n;
        for idx in 0..g.num_nodes() {
            let (i, j, k) = g.node_ijk(idx);
            let mirror = g.node_index(n - 1 - i, n - 1 - j, n - 1 - k);
            assert_eq!(mask.labels[idx], mask.labels[mirror]);
            assert_eq!(f.nodes[idx], f.nodes[mirror]);
        }
        let molecular = mask.molecular_count();
        let solvent = mask.labels.iter().filter(|r| **r == Region::Solvent).count();
        assert_eq!(molecular + solvent, g.num_nodes());
    }

    #[test]
    fn molecule_outside_domain_is_flagged() {
        let g = make_grid(2.0, 5).unwrap();
        let far = Molecule::from_atoms(vec![Atom { position: [50.0, 0.0, 0.0], charge: 1.0, radius: 1.0 }]).unwrap();
        let mask = classify_regions(&g, &far, None);
        assert!(mask.molecule_outside);
        assert_eq!(mask.molecular_count(), 0);
    }
}
