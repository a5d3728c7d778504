//! Preconditioned conjugate gradients for the SPD systems `A1 + diag(d)`.
//!
//! Reductions are computed over fixed-size chunks and summed in order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::StencilOperator;

const CHUNK: usize = 4096;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum())
        .collect();
    partial.iter().sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    Jacobi,
    /// Zero fill-in incomplete Cholesky in natural ordering.
    IncompleteCholesky,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 20_000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solver contract for `(A + diag(shift)) x = rhs` with SPD left-hand side.
pub trait SpdSolver {
    fn solve(
        &self,
        op: &StencilOperator,
        shift: Option<&[f64]>,
        rhs: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, LinearSolveStats)>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pcg {
    pub options: LinearSolverOptions,
}

impl Pcg {
    pub fn new(options: LinearSolverOptions) -> Self {
        Self { options }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Ic { pivots: Vec<f64> },
}

fn build_preconditioner(kind: Preconditioner, op: &StencilOperator, diag: &[f64]) -> Result<Precond> {
    match kind {
        Preconditioner::Jacobi => Ok(Precond::Jacobi(diag.iter().map(|d| 1.0 / d).collect())),
        Preconditioner::IncompleteCholesky => {
            let m = op.m;
            let s = [m * m, m, 1];
            let mut pivots = vec![0.0; diag.len()];
            for p in 0..diag.len() {
                let ijk = [p / (m * m), (p / m) % m, p % m];
                let mut d = diag[p];
                for a in 0..3 {
                    if ijk[a] > 0 {
                        let q = p - s[a];
                        d -= op.off[a][q] * op.off[a][q] / pivots[q];
                    }
                }
                if !(d > 0.0) {
                    return Err(Error::InvalidCoefficient(format!(
                        "incomplete Cholesky breakdown at row {p}"
                    )));
                }
                pivots[p] = d;
            }
            Ok(Precond::Ic { pivots })
        }
    }
}

fn apply_preconditioner(pc: &Precond, op: &StencilOperator, r: &[f64], z: &mut [f64]) {
    match pc {
        Precond::Jacobi(inv) => {
            z.par_iter_mut()
                .zip(r.par_iter().zip(inv.par_iter()))
                .for_each(|(z, (r, d))| *z = r * d);
        }
        Precond::Ic { pivots } => {
            let m = op.m;
            let s = [m * m, m, 1];
            let n = r.len();
            for p in 0..n {
                let ijk = [p / (m * m), (p / m) % m, p % m];
                let mut v = r[p];
                for a in 0..3 {
                    if ijk[a] > 0 {
                        v -= op.off[a][p - s[a]] * z[p - s[a]];
                    }
                }
                z[p] = v / pivots[p];
            }
            for p in (0..n).rev() {
                let ijk = [p / (m * m), (p / m) % m, p % m];
                let mut v = 0.0;
                for a in 0..3 {
                    if ijk[a] + 1 < m {
                        v += op.off[a][p] * z[p + s[a]];
                    }
                }
                z[p] -= v / pivots[p];
            }
        }
    }
}

impl SpdSolver for Pcg {
    fn solve(
        &self,
        op: &StencilOperator,
        shift: Option<&[f64]>,
        rhs: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, LinearSolveStats)> {
        let dim = op.dim();
        if rhs.len() != dim {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, operator {dim}",
                rhs.len()
            )));
        }
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok((
                vec![0.0; dim],
                LinearSolveStats {
                    iterations: 0,
                    rel_residual: 0.0,
                },
            ));
        }
        let diag: Vec<f64> = match shift {
            Some(s) => op.diag.iter().zip(s).map(|(a, b)| a + b).collect(),
            None => op.diag.clone(),
        };
        let pc = build_preconditioner(self.options.preconditioner, op, &diag)?;
        let mut x = guess.map_or_else(|| vec![0.0; dim], |g| g.to_vec());
        let mut ax = vec![0.0; dim];
        let residual = |x: &[f64], ax: &mut Vec<f64>| -> Vec<f64> {
            op.apply_shifted(x, shift, ax);
            rhs.iter().zip(ax.iter()).map(|(b, a)| b - a).collect()
        };
        let mut r = residual(&x, &mut ax);
        let mut rel = norm(&r) / bnorm;
        if rel <= self.options.rel_tol {
            return Ok((
                x,
                LinearSolveStats {
                    iterations: 0,
                    rel_residual: rel,
                },
            ));
        }
        let mut z = vec![0.0; dim];
        apply_preconditioner(&pc, op, &r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; dim];
        for it in 1..=self.options.max_iter {
            op.apply_shifted(&p, shift, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::LinearSolveFailure {
                    iterations: it,
                    residual: rel,
                });
            }
            let alpha = rz / pq;
            x.par_iter_mut().zip(p.par_iter()).for_each(|(x, p)| *x += alpha * p);
            if it % 50 == 0 {
                r = residual(&x, &mut ax);
            } else {
                r.par_iter_mut().zip(q.par_iter()).for_each(|(r, q)| *r -= alpha * q);
            }
            rel = norm(&r) / bnorm;
            if rel <= self.options.rel_tol {
                // Confirm against the true residual before accepting.
                let true_rel = norm(&residual(&x, &mut ax)) / bnorm;
                if true_rel <= self.options.rel_tol {
                    return Ok((
                        x,
                        LinearSolveStats {
                            iterations: it,
                            rel_residual: true_rel,
                        },
                    ));
                }
                r = residual(&x, &mut ax);
            }
            apply_preconditioner(&pc, op, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
        }
        Err(Error::LinearSolveFailure {
            iterations: self.options.max_iter,
            residual: rel,
        })
    }
}

/// Convenience wrapper around [`Pcg`].
pub fn solve_linear(
    op: &StencilOperator,
    shift: Option<&[f64]>,
    rhs: &[f64],
    options: &LinearSolverOptions,
) -> Result<(Vec<f64>, LinearSolveStats)> {
    Pcg::new(*options).solve(op, shift, rhs, None)
}
