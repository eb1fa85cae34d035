//! Riemannian gradient descent on the complex circle manifold
//! `{β : |β_n| = 1}` for the phase-shift subproblem
//!
//! `min_β  w_crb Σ_k tr(J_k^{-1}(β)) + ρ ‖v − Xβ‖²`.

use serde::{Deserialize, Serialize};

use super::fim::CrbTerm;
use crate::channel::{CVector, PhaseShiftVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcmSettings {
    pub max_iter: usize,
    /// Stop once `‖grad‖ ≤ grad_tol · |f|`; the objective's scale follows
    /// the noise level, so an absolute tolerance would be meaningless.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    /// First trial step, measured as the largest per-element displacement.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for CcmSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_backtracks: 40,
        }
    }
}

/// Objective of the phase-shift subproblem.
#[derive(Debug, Clone)]
pub struct BetaProblem<'a> {
    pub crb_terms: &'a [CrbTerm],
    pub crb_weight: f64,
    /// Rows `x_i` with `x_i^T β` the response toward RIS `i`.
    pub rows: &'a [CVector],
    pub targets: &'a [C64],
    /// Weight on the quadratic term (`γ/2` inside ADMM).
    pub penalty: f64,
}

impl BetaProblem<'_> {
    fn residuals(&self, beta: &CVector) -> Vec<C64> {
        self.rows
            .iter()
            .zip(self.targets)
            .map(|(x, v)| v - x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<C64>())
            .collect()
    }

    pub fn value(&self, beta: &CVector) -> f64 {
        let crb: f64 = if self.crb_weight != 0.0 {
            self.crb_terms.iter().map(|t| t.value(beta)).sum()
        } else {
            0.0
        };
        let quad: f64 = self.residuals(beta).iter().map(|r| r.norm_sqr()).sum();
        self.crb_weight * crb + self.penalty * quad
    }

    /// Value and Euclidean gradient (`2 ∂f/∂β̄`).
    pub fn value_and_gradient(&self, beta: &CVector) -> (f64, CVector) {
        let mut value = 0.0;
        let mut grad = CVector::zeros(beta.len());
        if self.crb_weight != 0.0 {
            for t in self.crb_terms {
                let (v, g) = t.value_and_gradient(beta);
                value += self.crb_weight * v;
                grad += g * C64::from(self.crb_weight);
            }
        }
        for (x, r) in self.rows.iter().zip(self.residuals(beta)) {
            value += self.penalty * r.norm_sqr();
            // -2ρ conj(x) r
            grad -= x.map(|a| a.conj()) * (r * (2.0 * self.penalty));
        }
        (value, grad)
    }
}

/// Projection of a Euclidean gradient onto the tangent space at `beta`.
pub fn riemannian_gradient(euclid: &CVector, beta: &CVector) -> CVector {
    CVector::from_iterator(
        beta.len(),
        euclid.iter().zip(beta.iter()).map(|(g, b)| g - b * (g * b.conj()).re),
    )
}

/// `(β + α d) / |β + α d|` elementwise; entries the step leaves unchanged
/// are returned as-is.
pub fn retract(beta: &CVector, direction: &CVector, alpha: f64) -> PhaseShiftVector {
    let moved = CVector::from_iterator(
        beta.len(),
        beta.iter().zip(direction.iter()).map(|(b, d)| {
            let z = b + d * alpha;
            if z == *b {
                *b
            } else {
                let m = z.norm();
                if m > 0.0 { z / m } else { *b }
            }
        }),
    );
    PhaseShiftVector::from_unit_values(moved)
}

#[derive(Debug, Clone)]
pub struct CcmOutcome {
    pub beta: PhaseShiftVector,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Armijo-backtracked Riemannian gradient descent from `init`. Never
/// returns a point worse than `init`.
pub fn solve_beta_subproblem(problem: &BetaProblem<'_>, init: &PhaseShiftVector, settings: &CcmSettings) -> CcmOutcome {
    let mut beta = init.clone();
    let (mut value, mut egrad) = problem.value_and_gradient(beta.values());
    let initial_value = value;
    let mut rgrad = riemannian_gradient(&egrad, beta.values());
    let mut grad_norm = rgrad.norm();
    let mut iterations = 0;
    // displacement of the last accepted step; the next search starts at twice it
    let mut displacement = settings.initial_step;
    while iterations < settings.max_iter && grad_norm > settings.grad_tol * value.abs() {
        let dir = -&rgrad;
        let dmax = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
        if dmax == 0.0 {
            break;
        }
        let mut step = displacement / dmax;
        let slope = grad_norm * grad_norm;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial = retract(beta.values(), &dir, step);
            let v = problem.value(trial.values());
            if v <= value - settings.armijo_c1 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= settings.shrink;
        }
        let Some((next, next_value)) = accepted else { break };
        iterations += 1;
        displacement = (2.0 * step * dmax).min(settings.initial_step);
        let improvement = value - next_value;
        beta = next;
        let (v, g) = problem.value_and_gradient(beta.values());
        value = v;
        egrad = g;
        rgrad = riemannian_gradient(&egrad, beta.values());
        grad_norm = rgrad.norm();
        if improvement <= 1e-12 * value.abs() {
            break;
        }
    }
    CcmOutcome { beta, value, initial_value, iterations, grad_norm }
}
