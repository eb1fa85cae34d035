//! Fusion of per-RIS local estimates into one global position.
//!
//! Near-field estimates contribute a point, far-field estimates a ray from
//! the RIS center. The global estimate minimizes the sum of squared
//! point-to-point and point-to-ray distances over an axis-aligned box.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Vec3;

/// Ridge on the Hessian, centered at the input centroid, that keeps the
/// problem strictly convex when all rays are parallel.
pub const FUSION_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FusionInput {
    Point(Vec3),
    Ray { anchor: Vec3, direction: Vec3 },
}

impl FusionInput {
    /// Ray with the direction normalized to unit length.
    pub fn ray(anchor: Vec3, direction: Vec3) -> Result<Self> {
        let direction = direction
            .try_normalize(1e-15)
            .ok_or_else(|| Error::Domain("ray direction must be non-zero".into()))?;
        Ok(Self::Ray { anchor, direction })
    }

    fn anchor(&self) -> Vec3 {
        match *self {
            FusionInput::Point(c) => c,
            FusionInput::Ray { anchor, .. } => anchor,
        }
    }

    pub fn residual(&self, p: &Vec3) -> f64 {
        match self {
            FusionInput::Point(c) => nf_residual(p, c),
            FusionInput::Ray { anchor, direction } => ff_residual(p, anchor, direction),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec3,
    pub upper: Vec3,
}

impl SearchBox {
    pub fn new(lower: Vec3, upper: Vec3) -> Result<Self> {
        if (0..3).any(|i| !(lower[i] < upper[i])) {
            return Err(Error::Config("box lower bound must be below upper bound on every axis".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..8).map(move |m| {
            Vec3::from_fn(|i, _| if m >> i & 1 == 1 { self.upper[i] } else { self.lower[i] })
        })
    }
}

pub fn nf_residual(p: &Vec3, c: &Vec3) -> f64 {
    (p - c).norm()
}

/// Distance from `p` to the line through `anchor` along unit `direction`.
pub fn ff_residual(p: &Vec3, anchor: &Vec3, direction: &Vec3) -> f64 {
    (p - anchor).cross(direction).norm()
}

/// Sum of squared residuals (without the ridge).
pub fn fusion_objective(p: &Vec3, inputs: &[FusionInput]) -> f64 {
    inputs.iter().map(|i| i.residual(p).powi(2)).sum()
}

/// The ridged objective written as `p^T A p - 2 b^T p + const`.
#[derive(Debug, Clone, Copy)]
pub struct FusionQuadratic {
    pub a: Matrix3<f64>,
    pub b: Vec3,
}

impl FusionQuadratic {
    pub fn new(inputs: &[FusionInput]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::NoFusionInputs);
        }
        let centroid = inputs.iter().map(FusionInput::anchor).sum::<Vec3>() / inputs.len() as f64;
        let mut a = Matrix3::identity() * FUSION_RIDGE;
        let mut b = centroid * FUSION_RIDGE;
        for input in inputs {
            match input {
                FusionInput::Point(c) => {
                    a += Matrix3::identity();
                    b += c;
                }
                FusionInput::Ray { anchor, direction } => {
                    let proj = Matrix3::identity() - direction * direction.transpose();
                    a += proj;
                    b += proj * anchor;
                }
            }
        }
        Ok(Self { a, b })
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        2.0 * (self.a * p - self.b)
    }

    /// Objective up to an additive constant.
    pub fn value(&self, p: &Vec3) -> f64 {
        p.dot(&(self.a * p)) - 2.0 * self.b.dot(p)
    }
}

/// Norm of the gradient projected onto the box's feasible directions.
pub fn projected_gradient_residual(p: &Vec3, inputs: &[FusionInput], bx: &SearchBox) -> Result<f64> {
    let q = FusionQuadratic::new(inputs)?;
    let g = q.gradient(p);
    let pg = Vec3::from_fn(|i, _| {
        let at_lo = p[i] <= bx.lower[i];
        let at_hi = p[i] >= bx.upper[i];
        if (at_lo && g[i] > 0.0) || (at_hi && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        }
    });
    Ok(pg.norm())
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Exact minimizer of the box-constrained quadratic.
///
/// The problem is three-dimensional, so every active-set pattern
/// (free / at lower / at upper per axis) is solved in closed form and the
/// one satisfying the KKT conditions is returned.
pub fn fuse(inputs: &[FusionInput], bx: &SearchBox) -> Result<Vec3> {
    let q = FusionQuadratic::new(inputs)?;
    if let Some(p) = q.a.cholesky().map(|c| c.solve(&q.b)) {
        if bx.contains(&p) {
            return Ok(p);
        }
    }
    let scale = q.a.amax().max(1.0) * (q.b.amax() + bx.upper.amax() + bx.lower.amax() + 1.0);
    let tol = 1e-10 * scale;
    let mut best_kkt: Option<(f64, Vec3)> = None;
    let mut best_any: Option<(f64, Vec3)> = None;
    let states = [Bound::Free, Bound::Lower, Bound::Upper];
    for code in 0..27usize {
        let pattern = [states[code % 3], states[code / 3 % 3], states[code / 9]];
        let Some(p) = solve_pattern(&q, bx, &pattern) else { continue };
        let feasible = (0..3).all(|i| p[i] >= bx.lower[i] - tol && p[i] <= bx.upper[i] + tol);
        if !feasible {
            continue;
        }
        let p = bx.clamp(&p);
        let val = q.value(&p);
        let g = q.a * p - q.b;
        let kkt = (0..3).all(|i| match pattern[i] {
            Bound::Free => true,
            Bound::Lower => g[i] >= -tol,
            Bound::Upper => g[i] <= tol,
        });
        if kkt && best_kkt.is_none_or(|(v, _)| val < v) {
            best_kkt = Some((val, p));
        }
        if best_any.is_none_or(|(v, _)| val < v) {
            best_any = Some((val, p));
        }
    }
    best_kkt
        .or(best_any)
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Domain("fusion found no feasible active set".into()))
}

fn solve_pattern(q: &FusionQuadratic, bx: &SearchBox, pattern: &[Bound; 3]) -> Option<Vec3> {
    let mut p = Vec3::zeros();
    let mut free = Vec::with_capacity(3);
    for i in 0..3 {
        match pattern[i] {
            Bound::Free => free.push(i),
            Bound::Lower => p[i] = bx.lower[i],
            Bound::Upper => p[i] = bx.upper[i],
        }
    }
    if free.is_empty() {
        return Some(p);
    }
    // A_FF x_F = b_F - A_FX x_X
    let mut a_ff = SMatrix::<f64, 3, 3>::identity();
    let mut rhs = Vec3::zeros();
    for (r, &i) in free.iter().enumerate() {
        rhs[r] = q.b[i] - (0..3).filter(|j| !free.contains(j)).map(|j| q.a[(i, j)] * p[j]).sum::<f64>();
        for (c, &j) in free.iter().enumerate() {
            a_ff[(r, c)] = q.a[(i, j)];
        }
    }
    let x = a_ff.lu().solve(&rhs)?;
    for (r, &i) in free.iter().enumerate() {
        p[i] = x[r];
    }
    Some(p)
}
