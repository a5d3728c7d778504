//! Sinc quadrature for the Laplace–Gauss transform of the Newton kernel,
//!
//! ```text
//! 1/ρ = (2/√π) ∫₀^∞ exp(-t²ρ²) dt,
//! ```
//!
//! discretized after the substitution `t = sinh(u)` on the uniform nodes
//! `u_k = k·step`, `k = -M..M`, with `step = C0 ln(M) / M`. The Gaussians only
//! depend on `t_k²`, so the terms `±k` are folded into one with doubled weight.
//! The rule is accurate for `ρ` in roughly `[1e-2, 1]`; callers normalize
//! distances by a length scale covering their domain.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub m: usize,
    pub c0: f64,
    pub step: f64,
    /// Gaussian exponents `t_k² = sinh²(k·step)`, `k = 0..=M`.
    pub exponents: Vec<f64>,
    /// Folded weights: `step/√π` for `k = 0`, `2 step cosh(k step)/√π` otherwise.
    pub weights: Vec<f64>,
}

pub fn build_quadrature(m: usize, c0: f64) -> Result<QuadratureRule> {
    if m < 2 {
        return Err(Error::InvalidQuadrature(format!("M must be at least 2, got {m}")));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidQuadrature(format!("C0 must be positive, got {c0}")));
    }
    let step = c0 * (m as f64).ln() / m as f64;
    let sqrt_pi = PI.sqrt();
    let exponents = (0..=m).map(|k| (k as f64 * step).sinh().powi(2)).collect();
    let weights = (0..=m)
        .map(|k| {
            let w = step * (k as f64 * step).cosh() / sqrt_pi;
            if k == 0 {
                w
            } else {
                2.0 * w
            }
        })
        .collect();
    Ok(QuadratureRule {
        m,
        c0,
        step,
        exponents,
        weights,
    })
}

impl QuadratureRule {
    /// Number of folded terms, `M + 1`.
    pub fn folded_rank(&self) -> usize {
        self.m + 1
    }

    /// Quadrature node `u_k = k·step` for `k = -M..=M`.
    pub fn node(&self, k: i64) -> f64 {
        k as f64 * self.step
    }

    /// Unfolded weight of node `k` (`-M..=M`).
    pub fn unfolded_weight(&self, k: i64) -> f64 {
        self.step * self.node(k).cosh() / PI.sqrt()
    }

    /// Approximation of `1/r` with distances normalized by `scale`.
    pub fn kernel(&self, r: f64, scale: f64) -> f64 {
        self.kernel_terms(r, scale, 0..=self.m)
    }

    /// Partial sum over the folded terms in `range`.
    pub fn kernel_terms(&self, r: f64, scale: f64, range: std::ops::RangeInclusive<usize>) -> f64 {
        let rho2 = (r / scale).powi(2);
        range
            .map(|k| self.weights[k] * (-self.exponents[k] * rho2).exp())
            .sum::<f64>()
            / scale
    }
}
