//! Global/local geometry: RIS poses, element grids, spherical coordinates
//! relative to a surface, and near-field/far-field classification.
//!
//! Every RIS carries a local frame whose `+x` axis is the surface normal
//! (boresight) and whose elements sit in the local `y`-`z` plane. Angles
//! follow the convention `u(θ, φ) = (cos φ cos θ, cos φ sin θ, sin φ)`, so
//! `θ = φ = 0` points along the normal, `θ` is azimuth in the surface's
//! horizontal plane and `φ` is elevation.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Unit direction for azimuth `theta` and elevation `phi` in a RIS-local frame.
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(cp * ct, cp * st, sp)
}

/// Derivative of [`direction`] with respect to `theta`.
pub fn direction_dtheta(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let cp = phi.cos();
    Vec3::new(-cp * st, cp * ct, 0.0)
}

/// Derivative of [`direction`] with respect to `phi`.
pub fn direction_dphi(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(-sp * ct, -sp * st, cp)
}

/// Location of a point relative to a RIS: range, azimuth, elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        let s = Self { r, theta, phi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Domain(format!("range must be positive, got {}", self.r)));
        }
        for (name, a) in [("azimuth", self.theta), ("elevation", self.phi)] {
            if !(a.is_finite() && a.abs() < FRAC_PI_2) {
                return Err(Error::Domain(format!(
                    "{name} {a} outside the front half-space (-pi/2, pi/2)"
                )));
            }
        }
        Ok(())
    }

    pub fn direction(&self) -> Vec3 {
        direction(self.theta, self.phi)
    }

    /// Cartesian position in the RIS-local frame.
    pub fn to_local(&self) -> Vec3 {
        self.r * self.direction()
    }
}

/// Placement and shape of one planar RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPose {
    pub origin: Vec3,
    /// Maps RIS-local axes to global axes; column 0 is the surface normal.
    pub orientation: Rotation3<f64>,
    /// Element rows (along local z).
    pub n1: usize,
    /// Element columns (along local y).
    pub n2: usize,
    pub spacing: f64,
}

impl RisPose {
    /// Builds a pose from an explicit rotation matrix, checking that it is a
    /// proper rotation.
    pub fn new(origin: Vec3, orientation: Matrix3<f64>, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        let gram_err = (orientation.transpose() * orientation - Matrix3::identity()).amax();
        if gram_err > ORTHONORMAL_TOL {
            return Err(Error::Domain(format!(
                "orientation is not orthonormal (max |R^T R - I| = {gram_err:.3e})"
            )));
        }
        if (orientation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Domain("orientation must have determinant +1".into()));
        }
        Self::from_rotation(origin, Rotation3::from_matrix_unchecked(orientation), n1, n2, spacing)
    }

    pub fn from_rotation(origin: Vec3, orientation: Rotation3<f64>, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Domain("RIS needs at least one element".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Domain(format!("element spacing must be positive, got {spacing}")));
        }
        if !(origin.iter().all(|c| c.is_finite())) {
            return Err(Error::Domain("RIS origin must be finite".into()));
        }
        Ok(Self { origin, orientation, n1, n2, spacing })
    }

    /// Surface at `origin` with identity orientation (normal along global +x).
    pub fn identity_at(origin: Vec3, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        Self::from_rotation(origin, Rotation3::identity(), n1, n2, spacing)
    }

    /// Surface whose normal points along `normal`, with local z as close to
    /// global +z as possible (global +y is used when the normal is vertical).
    pub fn facing(origin: Vec3, normal: Vec3, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        let x = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Domain("RIS normal must be non-zero".into()))?;
        let up = if x.z.abs() > 1.0 - 1e-9 { Vec3::y() } else { Vec3::z() };
        let y = up.cross(&x).normalize();
        let z = x.cross(&y);
        let m = Matrix3::from_columns(&[x, y, z]);
        Self::from_rotation(origin, Rotation3::from_matrix_unchecked(m), n1, n2, spacing)
    }

    pub fn element_count(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn normal(&self) -> Vec3 {
        self.orientation * Vec3::x()
    }

    /// Diagonal of the aperture spanned by element centers.
    pub fn aperture_diagonal(&self) -> f64 {
        let a = (self.n1 - 1) as f64;
        let b = (self.n2 - 1) as f64;
        (a * a + b * b).sqrt() * self.spacing
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(&(p - self.origin))
    }

    pub fn to_global(&self, local: &Vec3) -> Vec3 {
        self.orientation * local + self.origin
    }

    /// Rotates a local direction into the global frame.
    pub fn direction_to_global(&self, local: &Vec3) -> Vec3 {
        self.orientation * local
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    NearField,
    FarField,
}

/// Local element coordinates `(0, y_n, z_n)`, centered on the surface
/// origin, rows along z, `n2` (columns along y) varying fastest.
pub fn element_grid(pose: &RisPose) -> Vec<Vec3> {
    let cy = (pose.n2 as f64 - 1.0) / 2.0;
    let cz = (pose.n1 as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(pose.element_count());
    for i in 0..pose.n1 {
        for j in 0..pose.n2 {
            out.push(Vec3::new(
                0.0,
                (j as f64 - cy) * pose.spacing,
                (i as f64 - cz) * pose.spacing,
            ));
        }
    }
    out
}

/// Spherical coordinates of a global point as seen from the RIS.
pub fn relative_spherical(point: &Vec3, pose: &RisPose) -> Result<SphericalCoord> {
    let local = pose.to_local(point);
    if !(local.x > 0.0) {
        return Err(Error::HalfSpaceViolation { local_x: local.x });
    }
    let r = local.norm();
    let theta = local.y.atan2(local.x);
    let phi = (local.z / r).clamp(-1.0, 1.0).asin();
    Ok(SphericalCoord { r, theta, phi })
}

pub fn spherical_to_global(sph: &SphericalCoord, pose: &RisPose) -> Vec3 {
    pose.to_global(&sph.to_local())
}

/// Fraunhofer distance `2 D^2 / λ` with `D` the aperture diagonal.
pub fn fraunhofer_distance(pose: &RisPose, wavelength: f64) -> f64 {
    let d = pose.aperture_diagonal();
    2.0 * d * d / wavelength
}

/// Near-field strictly inside the Fraunhofer distance; the boundary itself is far-field.
pub fn region_classify(sph: &SphericalCoord, pose: &RisPose, wavelength: f64) -> RegionLabel {
    if sph.r < fraunhofer_distance(pose, wavelength) {
        RegionLabel::NearField
    } else {
        RegionLabel::FarField
    }
}
