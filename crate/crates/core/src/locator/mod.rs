//! Per-RIS local localization: a hybrid near-field/far-field dictionary of
//! steering atoms and orthogonal matching pursuit over the sensing matrix
//! `A = B^T diag(w H^T) F` built from the phase-shift history.

mod cache;

pub use cache::{dictionary_cache_key, load_or_build, read_dictionary, write_dictionary};

use nalgebra::RowDVector;
use serde::{Deserialize, Serialize};

use crate::channel::{ff_steering, nf_steering, CMatrix, CVector, PhaseShiftVector, C64};
use crate::error::{Error, Result};
use crate::scene::{element_grid, fraunhofer_distance, RegionLabel, RisPose, SphericalCoord};

/// Sampling of one RIS's field of view. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of near-field range samples, spread uniformly in `1/r`.
    pub n_r: usize,
    /// Smallest sampled range; defaults to twice the aperture diagonal.
    pub r_min: Option<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub delta_theta: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub delta_phi: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let half = std::f64::consts::FRAC_PI_2;
        if self.n_r == 0 {
            return Err(Error::Config("grid needs n_r >= 1".into()));
        }
        for (lo, hi, step, name) in [
            (self.theta_min, self.theta_max, self.delta_theta, "azimuth"),
            (self.phi_min, self.phi_max, self.delta_phi, "elevation"),
        ] {
            if !(step > 0.0) {
                return Err(Error::Config(format!("{name} step must be positive")));
            }
            if !(lo <= hi && lo > -half && hi < half) {
                return Err(Error::Config(format!(
                    "{name} extent [{lo}, {hi}] must be ordered and inside (-pi/2, pi/2)"
                )));
            }
        }
        if let Some(r) = self.r_min {
            if !(r > 0.0) {
                return Err(Error::Config("r_min must be positive".into()));
            }
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        Self::axis(self.theta_min, self.theta_max, self.delta_theta)
    }

    pub fn phis(&self) -> Vec<f64> {
        Self::axis(self.phi_min, self.phi_max, self.delta_phi)
    }

    /// Near-field ranges: midpoints of `n_r` equal cells in `1/r` between
    /// `r_min` and the Fraunhofer distance, farthest first. Empty when the
    /// near-field region is thinner than `r_min`.
    pub fn ranges(&self, pose: &RisPose, wavelength: f64) -> Vec<f64> {
        let r_max = fraunhofer_distance(pose, wavelength);
        let r_min = self.r_min.unwrap_or(2.0 * pose.aperture_diagonal());
        if !(r_min > 0.0 && r_max > r_min) {
            return Vec::new();
        }
        let (inv_far, inv_near) = (1.0 / r_max, 1.0 / r_min);
        (0..self.n_r)
            .map(|i| {
                let t = (i as f64 + 0.5) / self.n_r as f64;
                1.0 / (inv_far + t * (inv_near - inv_far))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DictionaryMode {
    Hybrid,
    FarFieldOnly,
}

/// What one dictionary column represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AtomLabel {
    Near(SphericalCoord),
    Far { theta: f64, phi: f64 },
}

impl AtomLabel {
    pub fn region(&self) -> RegionLabel {
        match self {
            AtomLabel::Near(_) => RegionLabel::NearField,
            AtomLabel::Far { .. } => RegionLabel::FarField,
        }
    }

    pub fn angles(&self) -> (f64, f64) {
        match *self {
            AtomLabel::Near(s) => (s.theta, s.phi),
            AtomLabel::Far { theta, phi } => (theta, phi),
        }
    }
}

/// Unit-norm steering atoms: `s1` near-field columns followed by `s2`
/// far-field columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: CMatrix,
    pub labels: Vec<AtomLabel>,
    pub s1: usize,
    pub s2: usize,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.atoms.nrows()
    }
}

pub fn build_dictionary(pose: &RisPose, grid: &GridSpec, wavelength: f64, mode: DictionaryMode) -> Result<Dictionary> {
    grid.validate()?;
    let elements = element_grid(pose);
    let thetas = grid.thetas();
    let phis = grid.phis();
    let ranges = match mode {
        DictionaryMode::Hybrid => grid.ranges(pose, wavelength),
        DictionaryMode::FarFieldOnly => Vec::new(),
    };
    let mut labels = Vec::with_capacity((ranges.len() + 1) * thetas.len() * phis.len());
    for &r in &ranges {
        for &theta in &thetas {
            for &phi in &phis {
                labels.push(AtomLabel::Near(SphericalCoord { r, theta, phi }));
            }
        }
    }
    let s1 = labels.len();
    for &theta in &thetas {
        for &phi in &phis {
            labels.push(AtomLabel::Far { theta, phi });
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let norm = (elements.len() as f64).sqrt();
    let mut atoms = CMatrix::zeros(elements.len(), labels.len());
    for (j, label) in labels.iter().enumerate() {
        let col = match label {
            AtomLabel::Near(s) => nf_steering(s, &elements, wavelength),
            AtomLabel::Far { theta, phi } => ff_steering(*theta, *phi, &elements, wavelength),
        };
        atoms.set_column(j, &(col / C64::from(norm)));
    }
    let s2 = labels.len() - s1;
    Ok(Dictionary { atoms, labels, s1, s2 })
}

/// `A = B^T · diag(e) · F` with `B` the `N × c` phase history and `e = w H^T`.
pub fn effective_sensing_matrix(dict: &Dictionary, phase_history: &CMatrix, effective_row: &CVector) -> Result<CMatrix> {
    let n = dict.element_count();
    if phase_history.nrows() != n {
        return Err(Error::Shape { context: "phase history rows", expected: n, got: phase_history.nrows() });
    }
    if effective_row.len() != n {
        return Err(Error::Shape { context: "effective row length", expected: n, got: effective_row.len() });
    }
    let mut weighted = phase_history.clone();
    for (mut row, e) in weighted.row_iter_mut().zip(effective_row.iter()) {
        row *= *e;
    }
    Ok(weighted.tr_mul(&dict.atoms))
}

/// One row of the sensing matrix for a single cycle's phase shifts.
pub fn sensing_row(dict: &Dictionary, beta: &PhaseShiftVector, effective_row: &CVector) -> Result<RowDVector<C64>> {
    let n = dict.element_count();
    if beta.len() != n || effective_row.len() != n {
        return Err(Error::Shape { context: "sensing row", expected: n, got: beta.len().min(effective_row.len()) });
    }
    let q = beta.values().component_mul(effective_row);
    Ok(q.tr_mul(&dict.atoms))
}

/// Output of local localization at one RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub ris_id: usize,
    pub label: AtomLabel,
    /// Index (into the dictionary) of the winning atom.
    pub atom: usize,
    pub coefficient: C64,
    pub support: Vec<usize>,
    pub coefficients: Vec<C64>,
    /// Residual norm before the first pick and after each iteration.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with a full least-squares refit per
/// iteration. The reported label belongs to the support atom with the
/// largest coefficient magnitude (lowest column on ties).
pub fn omp_localize(
    g: &CVector,
    a: &CMatrix,
    sparsity: usize,
    labels: &[AtomLabel],
    ris_id: usize,
) -> Result<LocalEstimate> {
    if sparsity == 0 {
        return Err(Error::Domain("OMP sparsity must be >= 1".into()));
    }
    if g.len() != a.nrows() {
        return Err(Error::Shape { context: "OMP observation", expected: a.nrows(), got: g.len() });
    }
    if labels.len() != a.ncols() {
        return Err(Error::Shape { context: "OMP labels", expected: a.ncols(), got: labels.len() });
    }
    if g.is_empty() || g.iter().all(|x| *x == C64::new(0.0, 0.0)) {
        return Err(Error::NoSignal);
    }
    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut residual = g.clone();
    let mut residual_norms = vec![residual.norm()];
    let mut coeffs = CVector::zeros(0);

    for _ in 0..sparsity.min(a.ncols()) {
        let corr = a.ad_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if col_norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let score = c.norm() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);
        let sub = a.select_columns(&support);
        coeffs = least_squares(&sub, g);
        residual = g - &sub * &coeffs;
        residual_norms.push(residual.norm());
    }
    if support.is_empty() {
        return Err(Error::NoSignal);
    }

    let mut win = 0;
    for i in 1..support.len() {
        let (mi, mw) = (coeffs[i].norm(), coeffs[win].norm());
        if mi > mw || (mi == mw && support[i] < support[win]) {
            win = i;
        }
    }
    Ok(LocalEstimate {
        ris_id,
        label: labels[support[win]],
        atom: support[win],
        coefficient: coeffs[win],
        support,
        coefficients: coeffs.iter().copied().collect(),
        residual_norms,
    })
}

fn least_squares(a: &CMatrix, b: &CVector) -> CVector {
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, tol).unwrap_or_else(|_| CVector::zeros(a.ncols()))
}
