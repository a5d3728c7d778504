//! Greedy reduced basis for the ionic-strength parameter.
//!
//! The reduced model keeps `Â1 = VᵀA1V`, the ionic rows of `V` (for the
//! online `cosh`/`sinh` terms), `Vᵀb_source` and the DEIM operator
//! `VᵀU_G(PᵀU_G)⁻¹`, so one online fixed-point step costs `O(N²|S|)` for
//! the projection of the ionic block and `O(N³)` for the dense solve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deim::{build_deim, build_snapshots, CutoffMode, DeimBasis};
use crate::error::{Error, Result};
use crate::fom::{FomOptions, FomProblem, Model};
use crate::linear::{dot, norm, LinearSolverOptions};
use crate::operators::{BoundaryGenerator, StencilOperator};
use crate::system::DiscreteSystem;

/// Append `column` to the orthonormal set `basis` by modified Gram–Schmidt
/// with one reorthogonalization pass. Returns `false` (and leaves `basis`
/// untouched) when the projected remainder is below `1e-12` of the
/// original norm.
pub fn orthonormalize(basis: &mut Vec<Vec<f64>>, column: &[f64]) -> bool {
    let original = norm(column);
    if original == 0.0 {
        return false;
    }
    let mut w = column.to_vec();
    for _ in 0..2 {
        for v in basis.iter() {
            let c = dot(v, &w);
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
        }
    }
    let rest = norm(&w);
    if rest < 1e-12 * original {
        return false;
    }
    w.iter_mut().for_each(|a| *a /= rest);
    basis.push(w);
    true
}

/// Symmetric `Σ_k d_k v_k v_kᵀ` over the rows `v_k` of a row-major `|S| × n` array.
pub(crate) fn project_diagonal(rows: &[f64], d: &[f64], n: usize) -> DMatrix<f64> {
    let mut gram = vec![0.0f64; n * n];
    for (row, dk) in rows.chunks_exact(n).zip(d) {
        for (a, &va) in row.iter().enumerate() {
            let da = dk * va;
            for (o, vb) in gram[a * n + a..(a + 1) * n].iter_mut().zip(&row[a..]) {
                *o += da * vb;
            }
        }
    }
    let mut m = DMatrix::from_row_slice(n, n, &gram);
    m.fill_lower_triangle_with_upper_triangle();
    m
}

/// `û = V u_N`.
pub fn reconstruct(basis: &[Vec<f64>], coefficients: &[f64]) -> Vec<f64> {
    let n = basis.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; n];
    for (v, c) in basis.iter().zip(coefficients) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// `Vᵀ x`.
pub fn project(basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    basis.iter().map(|v| dot(v, x)).collect()
}

const GRAM_BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    pub model: Model,
    /// Full interior dimension.
    pub dim: usize,
    pub a1: DMatrix<f64>,
    /// `Vᵀ` times the parameter-independent source.
    pub source: DVector<f64>,
    pub ionic_rows: Vec<usize>,
    /// `A2` on the ionic rows.
    pub a2: Vec<f64>,
    /// Ionic rows of `V`, row-major `|S| × N`.
    pub v_ionic: Vec<f64>,
    /// `V_Sᵀ diag(A2) V_S`.
    pub a2_projected: DMatrix<f64>,
    /// `VᵀU_G(PᵀU_G)⁻¹`, `N × r`.
    pub deim_operator: DMatrix<f64>,
    /// Evaluator holding only the DEIM rows of `b2`.
    pub evaluator: BoundaryGenerator,
    pub deim_indices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomOptions {
    pub fp_tol: f64,
    pub max_steps: usize,
    pub overflow_limit: f64,
}

impl Default for RomOptions {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            max_steps: 100,
            overflow_limit: 300.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RomTrace {
    pub deltas: Vec<f64>,
    /// Floating-point multiply-adds spent online.
    pub work: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RomSolution {
    pub ionic_strength: f64,
    pub coefficients: Vec<f64>,
    /// Iterate before the last update (zero after a single step).
    pub previous: Vec<f64>,
    pub trace: RomTrace,
}

impl ReducedModel {
    pub fn assemble(
        model: Model,
        a1: &StencilOperator,
        a2: &[f64],
        source: &[f64],
        basis: &[Vec<f64>],
        deim: &DeimBasis,
        boundary: &BoundaryGenerator,
    ) -> Result<Self> {
        let dim = a1.dim();
        if basis.is_empty() || basis.iter().any(|v| v.len() != dim) || a2.len() != dim || source.len() != dim {
            return Err(Error::Dimension("reduced model inputs do not match the operator".into()));
        }
        let n = basis.len();
        let av: Vec<Vec<f64>> = basis.par_iter().map(|v| a1.apply(v)).collect();
        let a1_hat = DMatrix::from_fn(n, n, |i, j| 0.5 * (dot(&basis[i], &av[j]) + dot(&basis[j], &av[i])));
        let ionic_rows: Vec<usize> = (0..dim).filter(|&p| a2[p] != 0.0).collect();
        let mut v_ionic = Vec::with_capacity(ionic_rows.len() * n);
        for &p in &ionic_rows {
            v_ionic.extend(basis.iter().map(|v| v[p]));
        }
        let a2_projected = project_diagonal(&v_ionic, &ionic_rows.iter().map(|&p| a2[p]).collect::<Vec<_>>(), n);
        Ok(Self {
            a2_projected,
            model,
            dim,
            a1: a1_hat,
            source: DVector::from_vec(project(basis, source)),
            a2: ionic_rows.iter().map(|&p| a2[p]).collect(),
            ionic_rows,
            v_ionic,
            deim_operator: deim.projected_operator(basis),
            evaluator: boundary.restrict(&deim.indices),
            deim_indices: deim.indices.clone(),
        })
    }

    pub fn size(&self) -> usize {
        self.a1.nrows()
    }

    /// Dense reduced solve for one ionic strength.
    pub fn solve(&self, ionic_strength: f64, options: &RomOptions) -> Result<RomSolution> {
        if !(ionic_strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ionic strength must be non-negative, got {ionic_strength}"
            )));
        }
        let n = self.size();
        let s = self.ionic_rows.len();
        let mu = ionic_strength;
        let mut trace = RomTrace::default();
        let c = self.evaluator.entries(mu, &self.deim_indices);
        let base = &self.source + &self.deim_operator * DVector::from_vec(c);
        trace.work += (n * self.deim_indices.len()) as u64;

        let mut u = DVector::zeros(n);
        let mut previous;
        let mut rising = 0;
        let steps = if self.model.is_linear() { 1 } else { options.max_steps };
        let mut f = DVector::zeros(n);
        let mut gram = vec![0.0f64; n * n];
        let mut weighted = if self.model.is_linear() || n <= 16 { Vec::new() } else { vec![0.0f64; GRAM_BLOCK.min(s) * n] };
        for _ in 0..steps {
            let (mut m, rhs) = if self.model.is_linear() || u.iter().all(|v| *v == 0.0) {
                // cosh(0) = 1 and sinh(0) = 0: the ionic block is affine in μ.
                trace.work += (n * n) as u64;
                (&self.a1 + &self.a2_projected * mu, base.clone())
            } else {
                self.ionic_pass(mu, u.as_slice(), options.overflow_limit, &mut gram, f.as_mut_slice(), &mut weighted)?;
                trace.work += (s * (n * n + 3 * n)) as u64;
                (&self.a1 + DMatrix::from_row_slice(n, n, &gram), &base + &f)
            };
            m.fill_lower_triangle_with_upper_triangle();
            trace.work += (n * n * n / 3) as u64;
            let next = match m.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => m.lu().solve(&rhs).ok_or_else(|| {
                    Error::NonlinearDivergence("singular reduced system".into())
                })?,
            };
            let delta = (&next - &u).norm();
            if let Some(&prev) = trace.deltas.last() {
                rising = if delta > prev { rising + 1 } else { 0 };
            }
            trace.deltas.push(delta);
            previous = std::mem::replace(&mut u, next);
            if !delta.is_finite() {
                return Err(Error::NonlinearDivergence("non-finite reduced update".into()));
            }
            if self.model.is_linear() || delta <= options.fp_tol * u.norm().max(1.0) {
                return Ok(RomSolution {
                    ionic_strength,
                    coefficients: u.iter().copied().collect(),
                    previous: previous.iter().copied().collect(),
                    trace,
                });
            }
            if rising >= 5 {
                return Err(Error::NonlinearDivergence(format!(
                    "reduced update grew for 5 consecutive steps (last δ = {delta:e})"
                )));
            }
        }
        Err(Error::NonlinearDivergence(format!(
            "reduced iteration did not converge within {} steps",
            options.max_steps
        )))
    }

    /// Accumulates `gram = V_Sᵀ diag(μ a2 cosh û) V_S` (full square) and
    /// `f = V_Sᵀ (μ a2 (cosh û ⊙ û − sinh û))` over the ionic rows.
    fn ionic_pass(
        &self,
        mu: f64,
        u: &[f64],
        limit: f64,
        gram: &mut [f64],
        f: &mut [f64],
        weighted: &mut [f64],
    ) -> Result<()> {
        macro_rules! fixed {
            ($($k:literal)*) => {
                match u.len() {
                    $($k => return self.ionic_pass_fixed::<$k>(mu, u, limit, gram, f),)*
                    _ => {}
                }
            };
        }
        fixed!(1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16);
        let n = u.len();
        f.fill(0.0);
        gram.iter_mut().for_each(|g| *g = 0.0);
        for (block, rows) in self.v_ionic.chunks(GRAM_BLOCK * n).enumerate() {
            let wrows = &mut weighted[..rows.len()];
            for (j, (row, wrow)) in rows.chunks_exact(n).zip(wrows.chunks_exact_mut(n)).enumerate() {
                let k = block * GRAM_BLOCK + j;
                let x: f64 = row.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                if !(x.abs() <= limit) {
                    return Err(Error::PotentialOverflow {
                        index: self.ionic_rows[k],
                        value: x.abs(),
                        limit,
                    });
                }
                let w = mu * self.a2[k];
                let e = x.exp();
                let ei = 1.0 / e;
                let (sh, ch) = (0.5 * (e - ei), 0.5 * (e + ei));
                let d = w * ch;
                let g = w * (ch * x - sh);
                for ((fa, wa), &va) in f.iter_mut().zip(wrow.iter_mut()).zip(row) {
                    *fa += g * va;
                    *wa = d * va;
                }
            }
            // gram += V_blockᵀ (diag(d) V_block), both row-major.
            let m = rows.len() / n;
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    m,
                    n,
                    1.0,
                    rows.as_ptr(),
                    1,
                    n as isize,
                    wrows.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    gram.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Ok(())
    }

    fn ionic_pass_fixed<const N: usize>(
        &self,
        mu: f64,
        u: &[f64],
        limit: f64,
        gram: &mut [f64],
        f: &mut [f64],
    ) -> Result<()> {
        let u: [f64; N] = u.try_into().expect("coefficient length");
        let mut g = [[0.0f64; N]; N];
        let mut acc = [0.0f64; N];
        for (k, row) in self.v_ionic.chunks_exact(N).enumerate() {
            let row: &[f64; N] = row.try_into().expect("row length");
            let mut x = 0.0;
            for a in 0..N {
                x += row[a] * u[a];
            }
            if !(x.abs() <= limit) {
                return Err(Error::PotentialOverflow { index: self.ionic_rows[k], value: x.abs(), limit });
            }
            let w = mu * self.a2[k];
            let e = x.exp();
            let ei = 1.0 / e;
            let (sh, ch) = (0.5 * (e - ei), 0.5 * (e + ei));
            let d = w * ch;
            let r = w * (ch * x - sh);
            for a in 0..N {
                acc[a] += r * row[a];
                let da = d * row[a];
                for b in 0..N {
                    g[a][b] += da * row[b];
                }
            }
        }
        for a in 0..N {
            f[a] = acc[a];
            gram[a * N..(a + 1) * N].copy_from_slice(&g[a]);
        }
        Ok(())
    }
}

/// `Δ_N = ‖F(ûⁿ) − A(ûⁿ)ûⁿ⁺¹‖₂` at full dimension with the exact `b2`, where
/// `ûⁿ`, `ûⁿ⁺¹` are the last two lifted iterates.
pub fn residual_estimator(problem: &FomProblem, basis: &[Vec<f64>], solution: &RomSolution) -> f64 {
    let next = reconstruct(basis, &solution.coefficients);
    let prev = reconstruct(basis, &solution.previous);
    let mu = problem.ionic_strength;
    let mut r = problem.a1.apply(&next);
    r.par_iter_mut().enumerate().for_each(|(p, v)| {
        let a = problem.a2[p];
        let mut lhs = *v;
        let mut rhs = problem.rhs[p];
        if a != 0.0 {
            if problem.model.is_linear() {
                lhs += mu * a * next[p];
            } else {
                let (sh, ch) = (prev[p].sinh(), prev[p].cosh());
                lhs += mu * a * ch * next[p];
                rhs += mu * a * (ch * prev[p] - sh);
            }
        }
        *v = rhs - lhs;
    });
    norm(&r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyOptions {
    pub tol: f64,
    pub fom: FomOptions,
    pub rom: RomOptions,
    pub deim_cutoff: f64,
    pub cutoff_mode: CutoffMode,
    /// Also log the largest true error over the training set (one extra
    /// FOM solve per training parameter).
    pub track_training_error: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            fom: FomOptions {
                fp_tol: 1e-12,
                linear: LinearSolverOptions {
                    rel_tol: 1e-13,
                    ..Default::default()
                },
                ..Default::default()
            },
            rom: RomOptions::default(),
            deim_cutoff: 1e-13,
            cutoff_mode: CutoffMode::Relative,
            track_training_error: false,
        }
    }
}

/// One greedy sweep over the training set with the basis of size `basis_size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyRecord {
    pub iteration: usize,
    pub basis_size: usize,
    /// Maximizer of the estimator.
    pub mu_star: f64,
    #[serde(with = "crate::io::float_text")]
    pub max_estimator: f64,
    /// `‖u(μ*) − Vu_N(μ*)‖₂`.
    #[serde(with = "crate::io::float_text")]
    pub true_error: f64,
    #[serde(with = "crate::io::float_text::option")]
    pub max_true_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedBasis {
    pub columns: Vec<Vec<f64>>,
    pub selected: Vec<f64>,
}

impl ReducedBasis {
    pub fn size(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug)]
pub struct GreedyOutcome {
    pub basis: ReducedBasis,
    pub rom: ReducedModel,
    pub deim: DeimBasis,
    pub log: Vec<GreedyRecord>,
    pub converged: bool,
    pub stall: Option<Error>,
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Index of the largest value; NaN counts as +∞ and ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if key(*v) > key(values[best]) {
            best = i;
        }
    }
    best
}

/// Greedy basis construction over `training`, starting from its first element.
pub fn greedy_build(
    system: &DiscreteSystem,
    model: Model,
    training: &[f64],
    options: &GreedyOptions,
) -> Result<GreedyOutcome> {
    if training.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("greedy tolerance must be positive, got {}", options.tol)));
    }
    let snapshots = build_snapshots(training, |mu| Ok(system.boundary.vector(mu)))?;
    let deim = build_deim(&snapshots, options.deim_cutoff, options.cutoff_mode)?;
    log::info!("DEIM rank {} (indices {:?})", deim.rank(), deim.indices);

    let fom = |mu: f64| system.solve(model, mu, &options.fom).map(|s| s.interior);
    let training_solutions: Option<Vec<Vec<f64>>> = if options.track_training_error {
        Some(training.iter().map(|&mu| fom(mu)).collect::<Result<_>>()?)
    } else {
        None
    };
    let snapshot = |j: usize| -> Result<Vec<f64>> {
        match &training_solutions {
            Some(all) => Ok(all[j].clone()),
            None => fom(training[j]),
        }
    };

    let mut columns = Vec::new();
    let mut selected_idx = vec![0usize];
    if !orthonormalize(&mut columns, &snapshot(0)?) {
        return Err(Error::DegenerateSnapshots);
    }
    let mut log = Vec::new();
    loop {
        let rom = ReducedModel::assemble(
            model,
            &system.a1,
            &system.a2,
            system.source(model),
            &columns,
            &deim,
            &system.boundary,
        )?;
        let sweep: Vec<(f64, Option<Vec<f64>>)> = training
            .par_iter()
            .map(|&mu| {
                let Ok(sol) = rom.solve(mu, &options.rom) else {
                    return (f64::INFINITY, None);
                };
                let problem = system.problem(model, mu).expect("validated parameter");
                let delta = residual_estimator(&problem, &columns, &sol);
                (delta, Some(reconstruct(&columns, &sol.coefficients)))
            })
            .collect();
        let deltas: Vec<f64> = sweep.iter().map(|s| s.0).collect();
        let star = argmax(&deltas);
        let max_delta = deltas[star];
        let truth = snapshot(star)?;
        let true_error = match &sweep[star].1 {
            Some(approx) => diff_norm(&truth, approx),
            None => f64::INFINITY,
        };
        let max_true_error = training_solutions.as_ref().map(|all| {
            all.iter()
                .zip(&sweep)
                .map(|(u, (_, a))| a.as_ref().map_or(f64::INFINITY, |a| diff_norm(u, a)))
                .fold(0.0, f64::max)
        });
        log.push(GreedyRecord {
            iteration: log.len(),
            basis_size: columns.len(),
            mu_star: training[star],
            max_estimator: max_delta,
            true_error,
            max_true_error,
        });
        log::info!(
            "greedy N = {}: max Δ = {max_delta:e} at μ = {}, true error {true_error:e}",
            columns.len(),
            training[star]
        );

        let stall = if max_delta < options.tol {
            None
        } else if selected_idx.contains(&star) {
            Some(format!("estimator maximizer μ = {} was already selected", training[star]))
        } else if columns.len() == training.len() {
            Some("basis size reached the training set size".to_string())
        } else if !orthonormalize(&mut columns, &truth) {
            Some(format!("snapshot at μ = {} is linearly dependent on the basis", training[star]))
        } else {
            selected_idx.push(star);
            continue;
        };
        let converged = stall.is_none();
        let stall = stall.map(|reason| {
            log::warn!("greedy stalled at N = {}: {reason}", columns.len());
            Error::GreedyStalled {
                basis_size: columns.len(),
                reason,
            }
        });
        return Ok(GreedyOutcome {
            basis: ReducedBasis {
                columns,
                selected: selected_idx.iter().map(|&j| training[j]).collect(),
            },
            rom,
            deim,
            log,
            converged,
            stall,
        });
    }
}
