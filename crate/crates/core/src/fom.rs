//! Full-order solves of the discrete (regularized or classical) PBE
//!
//! ```text
//! A1 u + μ A2 sinh(u) = b,
//! ```
//!
//! by the linearized fixed-point iteration
//! `(A1 + μ A2 B(uⁿ)) uⁿ⁺¹ = b - μ A2 sinh(uⁿ) + μ A2 B(uⁿ) uⁿ` with
//! `B = diag(cosh uⁿ)`, plus a damped Newton oracle for cross-checking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{norm, LinearSolverOptions, Pcg, SpdSolver};
use crate::operators::StencilOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Regularized nonlinear PBE.
    Nrpbe,
    /// Classical nonlinear PBE with point-charge sources.
    Npbe,
    /// Regularized linearized PBE.
    Lrpbe,
    /// Classical linearized PBE.
    Lpbe,
}

impl Model {
    pub fn is_linear(self) -> bool {
        matches!(self, Model::Lrpbe | Model::Lpbe)
    }

    pub fn is_regularized(self) -> bool {
        matches!(self, Model::Nrpbe | Model::Lrpbe)
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Nrpbe => "nrpbe",
            Model::Npbe => "npbe",
            Model::Lrpbe => "lrpbe",
            Model::Lpbe => "lpbe",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nrpbe" => Ok(Model::Nrpbe),
            "npbe" => Ok(Model::Npbe),
            "lrpbe" => Ok(Model::Lrpbe),
            "lpbe" => Ok(Model::Lpbe),
            other => Err(Error::InvalidParameter(format!(
                "unknown model '{other}' (expected nrpbe, npbe, lrpbe or lpbe)"
            ))),
        }
    }
}

/// One algebraic system at a fixed ionic strength.
#[derive(Clone, Debug)]
pub struct FomProblem<'a> {
    pub model: Model,
    pub a1: &'a StencilOperator,
    /// Unit-strength ionic diagonal.
    pub a2: &'a [f64],
    /// Source plus boundary vector.
    pub rhs: Vec<f64>,
    pub ionic_strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FomOptions {
    /// Stop when `δ ≤ fp_tol · max(1, ‖u‖₂)`.
    pub fp_tol: f64,
    pub max_steps: usize,
    pub linear: LinearSolverOptions,
    /// Largest admissible `|u|` on ion-accessible nodes.
    pub overflow_limit: f64,
}

impl Default for FomOptions {
    fn default() -> Self {
        Self {
            fp_tol: 1e-8,
            max_steps: 100,
            linear: LinearSolverOptions::default(),
            overflow_limit: 300.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub deltas: Vec<f64>,
    pub linear_residuals: Vec<f64>,
    pub linear_iterations: Vec<usize>,
}

impl IterationTrace {
    pub fn steps(&self) -> usize {
        self.deltas.len()
    }
}

fn ionic_rows(a2: &[f64]) -> Vec<usize> {
    (0..a2.len()).filter(|&p| a2[p] != 0.0).collect()
}

fn check_overflow(u: &[f64], rows: &[usize], limit: f64) -> Result<()> {
    for &p in rows {
        if !(u[p].abs() <= limit) {
            return Err(Error::PotentialOverflow {
                index: p,
                value: u[p].abs(),
                limit,
            });
        }
    }
    Ok(())
}

/// `A1 u + μ A2 N(u) - b` with `N = sinh` (nonlinear) or the identity.
pub fn nonlinear_residual(problem: &FomProblem, u: &[f64]) -> Vec<f64> {
    let mut r = problem.a1.apply(u);
    let mu = problem.ionic_strength;
    let linear = problem.model.is_linear();
    for p in 0..r.len() {
        let a = problem.a2[p];
        if a != 0.0 {
            r[p] += mu * a * if linear { u[p] } else { u[p].sinh() };
        }
        r[p] -= problem.rhs[p];
    }
    r
}

pub fn solve_fom(problem: &FomProblem, options: &FomOptions) -> Result<(Vec<f64>, IterationTrace)> {
    solve_fom_with(problem, options, &Pcg::new(options.linear))
}

pub fn solve_fom_with(
    problem: &FomProblem,
    options: &FomOptions,
    solver: &dyn SpdSolver,
) -> Result<(Vec<f64>, IterationTrace)> {
    let dim = problem.a1.dim();
    if problem.a2.len() != dim || problem.rhs.len() != dim {
        return Err(Error::Dimension(format!(
            "operator has {dim} unknowns, A2 {} and rhs {}",
            problem.a2.len(),
            problem.rhs.len()
        )));
    }
    let mu = problem.ionic_strength;
    let rows = ionic_rows(problem.a2);
    let mut trace = IterationTrace::default();

    if problem.model.is_linear() {
        let shift: Vec<f64> = problem.a2.iter().map(|a| mu * a).collect();
        let (u, stats) = solver.solve(problem.a1, Some(&shift), &problem.rhs, None)?;
        trace.deltas.push(norm(&u));
        trace.linear_residuals.push(stats.rel_residual);
        trace.linear_iterations.push(stats.iterations);
        return Ok((u, trace));
    }

    let mut u = vec![0.0; dim];
    let mut shift = vec![0.0; dim];
    let mut rising = 0;
    for _ in 0..options.max_steps {
        check_overflow(&u, &rows, options.overflow_limit)?;
        let mut rhs = problem.rhs.clone();
        for &p in &rows {
            let (s, c) = (u[p].sinh(), u[p].cosh());
            let w = mu * problem.a2[p];
            shift[p] = w * c;
            rhs[p] += w * (c * u[p] - s);
        }
        let (next, stats) = solver.solve(problem.a1, Some(&shift), &rhs, Some(&u))?;
        let delta = norm(&next.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = norm(&next).max(1.0);
        if let Some(&prev) = trace.deltas.last() {
            rising = if delta > prev { rising + 1 } else { 0 };
        }
        trace.deltas.push(delta);
        trace.linear_residuals.push(stats.rel_residual);
        trace.linear_iterations.push(stats.iterations);
        u = next;
        if !delta.is_finite() {
            return Err(Error::NonlinearDivergence(format!(
                "non-finite update at step {}",
                trace.steps()
            )));
        }
        if delta <= options.fp_tol * scale {
            check_overflow(&u, &rows, options.overflow_limit)?;
            return Ok((u, trace));
        }
        if rising >= 5 {
            return Err(Error::NonlinearDivergence(format!(
                "update norm grew for 5 consecutive steps (last δ = {delta:e})"
            )));
        }
    }
    Err(Error::NonlinearDivergence(format!(
        "no convergence within {} steps (last δ = {:e})",
        options.max_steps,
        trace.deltas.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Damped Newton on `A1 u + μ A2 sinh(u) - b = 0`. Returns the solution and
/// the number of Newton steps.
pub fn newton_oracle(problem: &FomProblem, tol: f64, options: &FomOptions) -> Result<(Vec<f64>, usize)> {
    let dim = problem.a1.dim();
    let mu = problem.ionic_strength;
    let rows = ionic_rows(problem.a2);
    let solver = Pcg::new(options.linear);
    let linear = problem.model.is_linear();
    let mut u = vec![0.0; dim];
    let mut r = nonlinear_residual(problem, &u);
    let mut rnorm = norm(&r);
    let floor = 1e-14 * norm(&problem.rhs).max(f64::MIN_POSITIVE);
    let mut shift = vec![0.0; dim];
    for step in 1..=options.max_steps {
        if rnorm <= floor {
            return Ok((u, step - 1));
        }
        for &p in &rows {
            shift[p] = mu * problem.a2[p] * if linear { 1.0 } else { u[p].cosh() };
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (du, _) = solver.solve(problem.a1, Some(&shift), &neg, None)?;
        let dnorm = norm(&du);
        if dnorm <= tol * norm(&u).max(1.0) {
            u.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
            return Ok((u, step));
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            if rows.iter().all(|&p| trial[p].abs() <= options.overflow_limit) {
                let rt = nonlinear_residual(problem, &trial);
                let tn = norm(&rt);
                if tn <= (1.0 - 1e-4 * alpha) * rnorm {
                    u = trial;
                    r = rt;
                    rnorm = tn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::OracleFailure(format!(
                "line search failed at step {step} (‖r‖ = {rnorm:e})"
            )));
        }
    }
    Err(Error::OracleFailure(format!(
        "no convergence within {} Newton steps",
        options.max_steps
    )))
}

/// Total potential `u = P_s + u^r` on the node grid.
pub fn total_potential(regular: &[f64], short_range: &[f64]) -> Vec<f64> {
    regular.iter().zip(short_range).map(|(a, b)| a + b).collect()
}
