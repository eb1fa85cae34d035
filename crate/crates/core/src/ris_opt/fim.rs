//! Fisher information of a user location seen through one RIS.
//!
//! Each cycle contributes one complex sample with mean
//! `μ_c(p) = β_c^T diag(w H^T) α s(p)` and circular Gaussian noise of
//! variance `σ²`, so `J = (2/σ²) Re{D^H D}` with `D` the `c × d` Jacobian
//! of the stacked means. The gain `α` is treated as known.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::channel::{path_gain, steering, wavenumber, CMatrix, CVector, PhaseShiftVector, C64};
use crate::error::{Error, Result};
use crate::scene::{
    direction_dphi, direction_dtheta, element_grid, region_classify, relative_spherical, RegionLabel,
    RisPose, SphericalCoord, Vec3,
};

/// Condition number above which a FIM counts as singular.
pub const MAX_FIM_CONDITION: f64 = 1e12;

/// Stand-in for `tr(J^{-1})` when `J` is singular.
pub const SINGULAR_CRB_PENALTY: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
}

/// Measurement model for one (user, RIS) pair around a location estimate.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub label: RegionLabel,
    /// Estimate in the RIS-local frame.
    pub location: SphericalCoord,
    pub elements: Vec<crate::scene::Vec3>,
    pub wavelength: f64,
    pub gain: C64,
    pub effective_row: CVector,
    pub noise_variance: f64,
}

impl LinkModel {
    /// Model around a global estimate; the region is classified unless forced.
    pub fn new(
        estimate: &Vec3,
        pose: &RisPose,
        forced_label: Option<RegionLabel>,
        effective_row: CVector,
        noise_variance: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let location = relative_spherical(estimate, pose)?;
        let label = forced_label.unwrap_or_else(|| region_classify(&location, pose, wavelength));
        Ok(Self {
            label,
            location,
            elements: element_grid(pose),
            wavelength,
            gain: path_gain(location.r, wavelength)?,
            effective_row,
            noise_variance,
        })
    }

    /// Number of location parameters: `(r, θ, φ)` or `(θ, φ)`.
    pub fn dim(&self) -> usize {
        match self.label {
            RegionLabel::NearField => 3,
            RegionLabel::FarField => 2,
        }
    }

    /// `e ⊙ α s(p)`.
    pub fn response(&self) -> CVector {
        steering(&self.location, self.label, &self.elements, self.wavelength)
            .component_mul(&self.effective_row)
            * self.gain
    }

    /// `e ⊙ α ∂s/∂p_j` for each location parameter, analytically.
    pub fn sensitivities(&self) -> Vec<CVector> {
        let k = wavenumber(self.wavelength);
        let s = steering(&self.location, self.label, &self.elements, self.wavelength);
        let SphericalCoord { r, theta, phi } = self.location;
        let u = self.location.direction();
        let du_t = direction_dtheta(theta, phi);
        let du_p = direction_dphi(theta, phi);
        let scaled = |dphase: Vec<f64>| -> CVector {
            CVector::from_iterator(
                s.len(),
                (0..s.len()).map(|n| s[n] * C64::new(0.0, dphase[n]) * self.effective_row[n] * self.gain),
            )
        };
        match self.label {
            RegionLabel::NearField => {
                // s_n = exp(-j k d_n), d_n = |r u - p_n|
                let p = r * u;
                let offsets: Vec<Vec3> = self.elements.iter().map(|pn| p - pn).collect();
                let partial = |dp: Vec3| -> Vec<f64> {
                    offsets.iter().map(|o| -k * o.dot(&dp) / o.norm()).collect()
                };
                vec![scaled(partial(u)), scaled(partial(r * du_t)), scaled(partial(r * du_p))]
            }
            RegionLabel::FarField => {
                // s_n = exp(+j k p_n·u)
                let partial = |du: Vec3| -> Vec<f64> { self.elements.iter().map(|pn| k * pn.dot(&du)).collect() };
                vec![scaled(partial(du_t)), scaled(partial(du_p))]
            }
        }
    }
}

fn history_matrix(history: &[PhaseShiftVector]) -> CMatrix {
    let cols: Vec<CVector> = history.iter().map(|b| b.values().clone()).collect();
    CMatrix::from_columns(&cols)
}

/// `c × d` Jacobian of the stacked noiseless samples.
pub fn jacobian(link: &LinkModel, history: &[PhaseShiftVector]) -> CMatrix {
    let sens = link.sensitivities();
    let b = history_matrix(history);
    let z = CMatrix::from_columns(&sens);
    b.tr_mul(&z)
}

/// `(2/σ²) Re{D^H D}` for a `c × d` Jacobian.
pub fn fim_from_jacobian(d: &CMatrix, noise_variance: f64) -> Result<FisherInfo> {
    if !(noise_variance > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {noise_variance}")));
    }
    let g = d.ad_mul(d);
    let scale = 2.0 / noise_variance;
    let mut m = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| scale * g[(i, j)].re);
    // exact symmetry
    let mt = m.transpose();
    m = (m + mt) * 0.5;
    Ok(FisherInfo { matrix: m })
}

pub fn fim(link: &LinkModel, history: &[PhaseShiftVector]) -> Result<FisherInfo> {
    if history.is_empty() {
        return Err(Error::Domain("FIM needs at least one cycle".into()));
    }
    fim_from_jacobian(&jacobian(link, history), link.noise_variance)
}

/// `tr(J^{-1})`, refusing matrices with condition number above 1e12.
pub fn crb_trace(j: &FisherInfo) -> Result<f64> {
    let eig = SymmetricEigen::new(j.matrix.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_FIM_CONDITION {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularFim { condition });
    }
    Ok(eig.eigenvalues.iter().map(|l| 1.0 / l).sum())
}

/// CRB contribution of one user to the phase-shift objective:
/// `tr((J_past + J(β))^{-1})` where `J(β)` is the information added by the
/// next cycle's phase shifts `β`.
#[derive(Debug, Clone)]
pub struct CrbTerm {
    past: DMatrix<f64>,
    sensitivities: Vec<CVector>,
    scale: f64,
}

impl CrbTerm {
    pub fn new(link: &LinkModel, history: &[PhaseShiftVector]) -> Result<Self> {
        if !(link.noise_variance > 0.0) {
            return Err(Error::Domain("noise variance must be positive".into()));
        }
        let d = link.dim();
        let past = if history.is_empty() {
            DMatrix::zeros(d, d)
        } else {
            fim(link, history)?.matrix
        };
        Ok(Self { past, sensitivities: link.sensitivities(), scale: 2.0 / link.noise_variance })
    }

    pub fn dim(&self) -> usize {
        self.sensitivities.len()
    }

    fn derivatives(&self, beta: &CVector) -> Vec<C64> {
        self.sensitivities
            .iter()
            .map(|z| beta.iter().zip(z.iter()).map(|(b, z)| b * z).sum())
            .collect()
    }

    pub fn fim(&self, beta: &CVector) -> FisherInfo {
        let a = self.derivatives(beta);
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.past[(i, j)] + self.scale * (a[i].conj() * a[j]).re);
        FisherInfo { matrix: m }
    }

    pub fn value(&self, beta: &CVector) -> f64 {
        crb_trace(&self.fim(beta)).unwrap_or(SINGULAR_CRB_PENALTY)
    }

    /// Value and Euclidean gradient `2 ∂f/∂β̄`; the gradient is zero on the
    /// singular penalty plateau.
    pub fn value_and_gradient(&self, beta: &CVector) -> (f64, CVector) {
        let a = self.derivatives(beta);
        let j = self.fim(beta);
        let d = self.dim();
        let eig = SymmetricEigen::new(j.matrix.clone());
        let (max, min) = (eig.eigenvalues.max(), eig.eigenvalues.min());
        if !(min > 0.0) || max / min > MAX_FIM_CONDITION {
            return (SINGULAR_CRB_PENALTY, CVector::zeros(beta.len()));
        }
        let value: f64 = eig.eigenvalues.iter().map(|l| 1.0 / l).sum();
        // W = J^{-2}
        let inv_sq = eig.eigenvalues.map(|l| 1.0 / (l * l));
        let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sq) * eig.eigenvectors.transpose();
        // g = -2 s Σ_j (Σ_i W_ij a_i) conj(z_j)
        let mut g = CVector::zeros(beta.len());
        for jj in 0..d {
            let c: C64 = (0..d).map(|i| a[i] * w[(i, jj)]).sum();
            g += self.sensitivities[jj].map(|z| z.conj()) * (c * (-2.0 * self.scale));
        }
        (value, g)
    }
}
