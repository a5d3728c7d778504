//! Discrete empirical interpolation of the boundary vector `b2(μ)`.
//!
//! Snapshots `G = [b2(μ_1), …, b2(μ_l)]` are compressed by a thin SVD; the
//! leading left singular vectors `U_G` are interpolated at greedily chosen
//! rows `℘`, so that `b2(μ) ≈ U_G (PᵀU_G)⁻¹ Pᵀ b2(μ)` needs only `r`
//! entries of `b2(μ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::BoundaryGenerator;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    pub params: Vec<f64>,
    /// One column per parameter.
    pub columns: Vec<Vec<f64>>,
}

impl SnapshotMatrix {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let rows = self.rows();
        DMatrix::from_fn(rows, self.columns.len(), |i, j| self.columns[j][i])
    }
}

/// Evaluate `generator` at every parameter (in parallel, order preserved).
pub fn build_snapshots<F>(params: &[f64], generator: F) -> Result<SnapshotMatrix>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    if let Some((j, mu)) = params.iter().enumerate().find(|(_, m)| !(**m >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "snapshot parameter {j} must be non-negative, got {mu}"
        )));
    }
    let columns = params
        .par_iter()
        .enumerate()
        .map(|(j, &mu)| {
            generator(mu).map_err(|e| Error::InvalidParameter(format!("snapshot {j} (μ = {mu}): {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if columns.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Dimension("snapshot columns differ in length".into()));
    }
    Ok(SnapshotMatrix {
        params: params.to_vec(),
        columns,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CutoffMode {
    /// Keep `σ_j > cutoff · σ_1`.
    #[default]
    Relative,
    /// Keep `σ_j > cutoff`.
    Absolute,
}

/// Truncated thin SVD `G ≈ U Σ Wᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinSvd {
    /// Retained left singular vectors (columns).
    pub modes: Vec<Vec<f64>>,
    /// All `l` singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns of an `l × l` matrix, in the same order.
    pub right: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }
}

/// Thin SVD through a Householder QR of `G` followed by an SVD of the
/// `l × l` factor `R`, retaining the modes above the cutoff.
pub fn thin_svd(g: &SnapshotMatrix, cutoff: f64, mode: CutoffMode) -> Result<ThinSvd> {
    if g.columns.is_empty() || g.rows() == 0 {
        return Err(Error::DegenerateSnapshots);
    }
    if g.columns.iter().all(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(Error::DegenerateSnapshots);
    }
    let l = g.columns.len();
    let m = g.to_matrix();
    let (q, r) = if g.rows() >= l {
        let qr = m.qr();
        (qr.q(), qr.r())
    } else {
        (DMatrix::identity(g.rows(), g.rows()), m)
    };
    let svd = r.svd(true, true);
    let (ur, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let threshold = match mode {
        CutoffMode::Relative => cutoff * sigma[0],
        CutoffMode::Absolute => cutoff,
    };
    let retained = sigma.iter().take_while(|s| **s > threshold).count();
    let modes = order[..retained]
        .iter()
        .map(|&i| (&q * ur.column(i)).iter().copied().collect())
        .collect();
    let mut right = DMatrix::zeros(l, k);
    for (c, &i) in order.iter().enumerate() {
        right.set_column(c, &vt.row(i).transpose());
    }
    let mut singular_values = sigma;
    singular_values.resize(l, 0.0);
    Ok(ThinSvd {
        modes,
        singular_values,
        right,
    })
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

fn gather(modes: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), modes.len(), |i, j| modes[j][rows[i]])
}

/// Greedy DEIM index selection. Ties go to the lowest index.
pub fn select_indices(modes: &[Vec<f64>]) -> Result<Vec<usize>> {
    let mut indices: Vec<usize> = Vec::with_capacity(modes.len());
    for (step, u) in modes.iter().enumerate() {
        let residual: Vec<f64> = if step == 0 {
            u.clone()
        } else {
            let pu = gather(&modes[..step], &indices);
            let rhs = DVector::from_iterator(step, indices.iter().map(|&p| u[p]));
            let alpha = pu.lu().solve(&rhs).ok_or(Error::DeimBreakdown { step })?;
            u.iter()
                .enumerate()
                .map(|(i, v)| v - (0..step).map(|j| modes[j][i] * alpha[j]).sum::<f64>())
                .collect()
        };
        let p = argmax_abs(&residual);
        if residual[p] == 0.0 || indices.contains(&p) {
            return Err(Error::DeimBreakdown { step });
        }
        indices.push(p);
    }
    let pu = gather(modes, &indices);
    if !pu.clone().lu().is_invertible() {
        return Err(Error::DeimBreakdown { step: modes.len() });
    }
    Ok(indices)
}

/// DEIM artifacts: modes `U_G`, indices `℘` and `(PᵀU_G)⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeimBasis {
    pub modes: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub indices: Vec<usize>,
    /// `(PᵀU_G)⁻¹`, `r × r`.
    pub pu_inverse: DMatrix<f64>,
}

pub fn build_deim(g: &SnapshotMatrix, cutoff: f64, mode: CutoffMode) -> Result<DeimBasis> {
    let svd = thin_svd(g, cutoff, mode)?;
    DeimBasis::from_modes(svd.modes, svd.singular_values)
}

impl DeimBasis {
    pub fn from_modes(modes: Vec<Vec<f64>>, singular_values: Vec<f64>) -> Result<Self> {
        let indices = select_indices(&modes)?;
        let pu_inverse = gather(&modes, &indices)
            .try_inverse()
            .ok_or(Error::DeimBreakdown { step: modes.len() })?;
        Ok(Self {
            modes,
            singular_values,
            indices,
            pu_inverse,
        })
    }

    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    /// `c = (PᵀU_G)⁻¹ Pᵀb` from the sampled entries `Pᵀb`.
    pub fn coefficients(&self, sampled: &[f64]) -> Vec<f64> {
        (&self.pu_inverse * DVector::from_column_slice(sampled))
            .iter()
            .copied()
            .collect()
    }

    /// Coefficients at `μ`, evaluating only the `r` interpolation entries.
    pub fn interpolate(&self, ionic_strength: f64, evaluator: &BoundaryGenerator) -> Vec<f64> {
        self.coefficients(&evaluator.entries(ionic_strength, &self.indices))
    }

    /// Full-length approximation `U_G c`.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        let n = self.modes.first().map_or(0, |m| m.len());
        let mut out = vec![0.0; n];
        for (m, c) in self.modes.iter().zip(coefficients) {
            out.iter_mut().zip(m).for_each(|(o, v)| *o += c * v);
        }
        out
    }

    /// Oblique projection `U_G (PᵀU_G)⁻¹ Pᵀ v` of a full vector.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let sampled: Vec<f64> = self.indices.iter().map(|&p| v[p]).collect();
        self.reconstruct(&self.coefficients(&sampled))
    }

    /// `Vᵀ U_G (PᵀU_G)⁻¹` for an orthonormal basis `V` (columns), `N × r`.
    pub fn projected_operator(&self, basis: &[Vec<f64>]) -> DMatrix<f64> {
        let vtu = DMatrix::from_fn(basis.len(), self.rank(), |i, j| crate::linear::dot(&basis[i], &self.modes[j]));
        vtu * &self.pu_inverse
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{classify_regions, dielectric_field, make_grid};
    use crate::molecule::{Atom, Molecule, PhysicalConstants};
    use crate::operators::{stiffness, DebyeHuckel};
    use rand::{Rng, SeedableRng};

    fn generator() -> BoundaryGenerator {
        let g = make_grid(12.0, 17).unwrap();
        let mol = Molecule::from_atoms(vec![
            Atom {
                position: [0.0, 0.0, 0.0],
                charge: 1.0,
                radius: 1.5,
            },
            Atom {
                position: [2.0, -1.0, 0.5],
                charge: -0.4,
                radius: 1.8,
            },
        ])
        .unwrap();
        let consts = PhysicalConstants::default();
        let mask = classify_regions(&g, &mol, None);
        let eps = dielectric_field(&g, &mask, 2.0, 78.54).unwrap();
        let (_, bc) = stiffness(&g, &eps);
        BoundaryGenerator::new(g.num_interior(), DebyeHuckel::new(&mol, &consts, 78.54), bc).unwrap()
    }

    fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        (0..cols).map(|j| q.column(j).iter().copied().collect()).collect()
    }

    #[test]
    fn snapshot_columns_match_regeneration() {
        let gen = generator();
        let params = [0.05, 0.1, 0.1, 0.15];
        let g = build_snapshots(&params, |mu| Ok(gen.vector(mu))).unwrap();
        assert_eq!(g.columns.len(), 4);
        assert_eq!(g.columns[1], g.columns[2]);
        assert_eq!(g.columns[3], gen.vector(0.15));
        let single = build_snapshots(&[0.07], |mu| Ok(gen.vector(mu))).unwrap();
        assert_eq!(single.columns, vec![gen.vector(0.07)]);
        assert!(build_snapshots(&[-1.0], |mu| Ok(gen.vector(mu))).is_err());
    }

    #[test]
    fn rank_one_snapshots() {
        let v: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let g = SnapshotMatrix {
            params: vec![0.0; 4],
            columns: vec![v.clone(); 4],
        };
        let svd = thin_svd(&g, 1e-13, CutoffMode::Relative).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!(svd.singular_values[1..].iter().all(|s| *s < 1e-13 * svd.singular_values[0]));
        let zero = SnapshotMatrix {
            params: vec![0.0],
            columns: vec![vec![0.0; 5]],
        };
        assert!(matches!(thin_svd(&zero, 1e-13, CutoffMode::Relative), Err(Error::DegenerateSnapshots)));
    }

    #[test]
    fn full_rank_reconstruction() {
        let gen = generator();
        let params: Vec<f64> = (0..6).map(|i| 0.05 + 0.02 * i as f64).collect();
        let g = build_snapshots(&params, |mu| Ok(gen.vector(mu))).unwrap();
        let svd = thin_svd(&g, 0.0, CutoffMode::Absolute).unwrap();
        let gm = g.to_matrix();
        let l = params.len();
        let u = DMatrix::from_fn(gm.nrows(), svd.rank(), |i, j| svd.modes[j][i]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(svd.singular_values[..svd.rank()].to_vec()));
        let w = svd.right.columns(0, svd.rank()).into_owned();
        let rec = u * s * w.transpose();
        assert_eq!(rec.ncols(), l);
        assert!((gm.clone() - rec).norm() / gm.norm() <= 1e-12);
        assert!(svd.singular_values.windows(2).all(|p| p[0] >= p[1]));
        // Orthonormal modes.
        for a in 0..svd.rank() {
            for b in 0..svd.rank() {
                let d = crate::linear::dot(&svd.modes[a], &svd.modes[b]);
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rank_monotone_in_cutoff() {
        let gen = generator();
        let params: Vec<f64> = (0..11).map(|i| 0.05 + 0.01 * i as f64).collect();
        let g = build_snapshots(&params, |mu| Ok(gen.vector(mu))).unwrap();
        let ranks: Vec<usize> = [1e-14, 1e-10, 1e-6, 1e-2]
            .iter()
            .map(|&c| thin_svd(&g, c, CutoffMode::Relative).unwrap().rank())
            .collect();
        assert!(ranks.windows(2).all(|w| w[0] >= w[1]), "{ranks:?}");
    }

    /// Step-by-step reimplementation of the greedy selection with explicit
    /// Gaussian elimination, as an independent oracle.
    fn reference_indices(u: &[Vec<f64>]) -> Vec<usize> {
        let rows = u[0].len();
        let mut p = Vec::new();
        for l in 0..u.len() {
            let mut r = u[l].clone();
            if l > 0 {
                let mut a: Vec<Vec<f64>> = (0..l).map(|i| (0..l).map(|j| u[j][p[i]]).collect()).collect();
                let mut b: Vec<f64> = (0..l).map(|i| u[l][p[i]]).collect();
                for c in 0..l {
                    let piv = (c..l).max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap()).unwrap();
                    a.swap(c, piv);
                    b.swap(c, piv);
                    for rr in c + 1..l {
                        let f = a[rr][c] / a[c][c];
                        for cc in c..l {
                            a[rr][cc] -= f * a[c][cc];
                        }
                        b[rr] -= f * b[c];
                    }
                }
                let mut c = vec![0.0; l];
                for i in (0..l).rev() {
                    c[i] = (b[i] - (i + 1..l).map(|j| a[i][j] * c[j]).sum::<f64>()) / a[i][i];
                }
                for i in 0..rows {
                    r[i] -= (0..l).map(|j| u[j][i] * c[j]).sum::<f64>();
                }
            }
            let mut best = 0;
            for i in 0..rows {
                if r[i].abs() > r[best].abs() {
                    best = i;
                }
            }
            p.push(best);
        }
        p
    }

    #[test]
    fn greedy_indices_match_reference() {
        for seed in 0..5 {
            let u = random_orthonormal(50, 4, seed);
            assert_eq!(select_indices(&u).unwrap(), reference_indices(&u));
        }
    }

    #[test]
    fn first_index_is_largest_entry() {
        let u = vec![vec![0.1, -0.9, 0.3, 0.9]];
        assert_eq!(select_indices(&u).unwrap(), vec![1]);
    }

    #[test]
    fn interpolation_is_an_exact_oblique_projector() {
        let u = random_orthonormal(40, 3, 9);
        let deim = DeimBasis::from_modes(u.clone(), vec![1.0; 3]).unwrap();
        for col in &u {
            let p = deim.project(col);
            assert!(p.iter().zip(col).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let v: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let once = deim.project(&v);
        let twice = deim.project(&once);
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-12));
        for &p in &deim.indices {
            assert!((once[p] - v[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_training_vectors_and_counts_entries() {
        let gen = generator();
        let params: Vec<f64> = (0..11).map(|i| 0.05 + 0.01 * i as f64).collect();
        let g = build_snapshots(&params, |mu| Ok(gen.vector(mu))).unwrap();
        let deim = build_deim(&g, 1e-13, CutoffMode::Relative).unwrap();
        let sparse = gen.restrict(&deim.indices);
        for (j, mu) in params.iter().enumerate() {
            sparse.reset_evaluations();
            let c = deim.interpolate(*mu, &sparse);
            assert_eq!(sparse.evaluations(), deim.rank());
            let rec = deim.reconstruct(&c);
            let exact = &g.columns[j];
            let err: f64 = rec.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nrm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * nrm, "{err} {nrm}");
            for &p in &deim.indices {
                assert!((rec[p] - exact[p]).abs() <= 1e-12 * nrm);
            }
        }
    }
}
