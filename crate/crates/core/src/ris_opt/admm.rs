//! ADMM for the per-RIS phase-shift problem
//!
//! `min ε ln η + Σ_k tr(J_k^{-1}(β))  s.t. |β_n| = 1, |x_i^T β|² ≤ η`
//!
//! with auxiliary `f_i = x_i^T β` and scaled duals `λ_i`.

use serde::{Deserialize, Serialize};

use super::ccm::{solve_beta_subproblem, BetaProblem, CcmSettings};
use super::fim::CrbTerm;
use crate::channel::{ff_steering, CVector, PhaseShiftVector, C64};
use crate::error::{Error, Result};
use crate::scene::Vec3;

/// Lower end of the `η` search interval.
pub const ETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub epsilon: f64,
    pub gamma: f64,
    pub max_outer: usize,
    pub tolerance: f64,
    pub ccm: CcmSettings,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { epsilon: 1e-2, gamma: 10.0, max_outer: 100, tolerance: 1e-4, ccm: CcmSettings::default() }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.gamma > 0.0 && self.tolerance > 0.0) || self.max_outer == 0 {
            return Err(Error::Config("ADMM needs ε, γ, tolerance > 0 and max_outer ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta: PhaseShiftVector,
    pub f: Vec<C64>,
    pub eta: f64,
    pub lambda: Vec<C64>,
    pub gamma: f64,
    pub epsilon: f64,
}

/// `x_i = e ⊙ a(θ, φ)`, so that the response toward the other RIS is `x_i^T β`.
pub fn sidelobe_row(effective_row: &CVector, elements: &[Vec3], theta: f64, phi: f64, wavelength: f64) -> CVector {
    effective_row.component_mul(&ff_steering(theta, phi, elements, wavelength))
}

/// `e^T diag(β) a(θ, φ)`.
pub fn sidelobe_response(
    beta: &PhaseShiftVector,
    effective_row: &CVector,
    elements: &[Vec3],
    theta: f64,
    phi: f64,
    wavelength: f64,
) -> C64 {
    let a = ff_steering(theta, phi, elements, wavelength);
    effective_row
        .iter()
        .zip(beta.values().iter())
        .zip(a.iter())
        .map(|((e, b), a)| e * b * a)
        .sum()
}

fn responses(rows: &[CVector], beta: &CVector) -> Vec<C64> {
    rows.iter()
        .map(|x| x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
        .collect()
}

/// Nearest point to `z` in the closed disk of the given radius.
pub fn project_to_disk(z: C64, radius: f64) -> C64 {
    let m = z.norm();
    if m > radius {
        z * (radius / m)
    } else {
        z
    }
}

fn eta_objective(ln_eta: f64, mags: &[f64], active: &[bool], gamma: f64, epsilon: f64) -> f64 {
    let s = (0.5 * ln_eta).exp();
    let pen: f64 = mags
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(m, _)| (s - m).powi(2))
        .sum();
    epsilon * ln_eta + 0.5 * gamma * pen
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bracketed golden-section search: a coarse scan picks the best cell and
/// golden-section refines inside it. Returns the better of the refined
/// point and the scanned samples.
fn scan_golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const CELLS: usize = 64;
    let step = (hi - lo) / CELLS as f64;
    let samples: Vec<(f64, f64)> = (0..=CELLS)
        .map(|i| if i == CELLS { hi } else { lo + i as f64 * step })
        .map(|x| (x, f(x)))
        .collect();
    let (best_i, _) = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, s)| (i, s.1))
        .unwrap_or((0, 0.0));
    let a = samples[best_i.saturating_sub(1)].0;
    let b = samples[(best_i + 1).min(CELLS)].0;
    let refined = golden_section(&f, a, b);
    if f(refined) < samples[best_i].1 {
        refined
    } else {
        samples[best_i].0
    }
}

/// The `(f, η)` block: `η` by golden-section search on `ln η` alternated
/// with the active-set indicator `ρ_i = [|f̂_i| > √η]`, then `f` by
/// projection of `f̂` onto the disk of radius `√η`.
pub fn solve_f_eta(f_hat: &[C64], gamma: f64, epsilon: f64) -> (Vec<C64>, f64) {
    let mags: Vec<f64> = f_hat.iter().map(|z| z.norm()).collect();
    let upper = mags.iter().fold(0.0f64, |a, &m| a.max(m * m)) + 1.0;
    let (lo, hi) = (ETA_FLOOR.ln(), upper.ln());
    let to_eta = |x: f64| if x <= lo { ETA_FLOOR } else { x.exp().min(upper) };
    let mut eta = ETA_FLOOR;
    let mut active: Vec<bool> = mags.iter().map(|&m| m > eta.sqrt()).collect();
    for _ in 0..20 {
        eta = to_eta(scan_golden(|x| eta_objective(x, &mags, &active, gamma, epsilon), lo, hi));
        let next: Vec<bool> = mags.iter().map(|&m| m > eta.sqrt()).collect();
        if next == active {
            break;
        }
        active = next;
    }
    let radius = eta.sqrt();
    (f_hat.iter().map(|&z| project_to_disk(z, radius)).collect(), eta)
}

/// `λ_i + f_i − r_i`.
pub fn dual_update(lambda: &[C64], f: &[C64], responses: &[C64]) -> Vec<C64> {
    lambda.iter().zip(f).zip(responses).map(|((l, f), r)| l + f - r).collect()
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub state: AdmmState,
    pub iterations: usize,
    pub primal_residual: f64,
    pub converged: bool,
}

impl AdmmOutcome {
    pub fn beta(&self) -> &PhaseShiftVector {
        &self.state.beta
    }
}

/// Runs the alternation from `init`. `crb_terms` may be empty (no users on
/// this RIS), `rows` may be empty (no other RIS to protect), but not both.
pub fn admm_optimize(
    crb_terms: &[CrbTerm],
    rows: &[CVector],
    init: &PhaseShiftVector,
    settings: &AdmmSettings,
) -> Result<AdmmOutcome> {
    settings.validate()?;
    if crb_terms.is_empty() && rows.is_empty() {
        return Err(Error::Domain("nothing to optimize: no users and no sidelobe constraints".into()));
    }
    if let Some(x) = rows.iter().find(|x| x.len() != init.len()) {
        return Err(Error::Shape { context: "sidelobe row", expected: init.len(), got: x.len() });
    }
    let crb_weight = if crb_terms.is_empty() { 0.0 } else { 1.0 };
    if rows.is_empty() {
        let problem = BetaProblem { crb_terms, crb_weight, rows: &[], targets: &[], penalty: 0.0 };
        let out = solve_beta_subproblem(&problem, init, &settings.ccm);
        return Ok(AdmmOutcome {
            state: AdmmState {
                beta: out.beta,
                f: Vec::new(),
                eta: ETA_FLOOR,
                lambda: Vec::new(),
                gamma: settings.gamma,
                epsilon: settings.epsilon,
            },
            iterations: 1,
            primal_residual: 0.0,
            converged: true,
        });
    }

    let r0 = responses(rows, init.values());
    let mut state = AdmmState {
        beta: init.clone(),
        eta: r0.iter().map(|z| z.norm_sqr()).fold(ETA_FLOOR, f64::max),
        f: r0,
        lambda: vec![C64::new(0.0, 0.0); rows.len()],
        gamma: settings.gamma,
        epsilon: settings.epsilon,
    };
    let mut primal_residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_outer {
        iterations += 1;
        let targets: Vec<C64> = state.f.iter().zip(&state.lambda).map(|(f, l)| f + l).collect();
        let problem = BetaProblem { crb_terms, crb_weight, rows, targets: &targets, penalty: 0.5 * settings.gamma };
        state.beta = solve_beta_subproblem(&problem, &state.beta, &settings.ccm).beta;

        let r = responses(rows, state.beta.values());
        let f_hat: Vec<C64> = r.iter().zip(&state.lambda).map(|(r, l)| r - l).collect();
        let (f, eta) = solve_f_eta(&f_hat, settings.gamma, settings.epsilon);
        state.f = f;
        state.eta = eta;
        state.lambda = dual_update(&state.lambda, &state.f, &r);
        primal_residual = state.f.iter().zip(&r).map(|(f, r)| (f - r).norm()).fold(0.0, f64::max);
        if primal_residual < settings.tolerance {
            break;
        }
    }
    Ok(AdmmOutcome { state, iterations, primal_residual, converged: primal_residual < settings.tolerance })
}
