//! Steering vectors, path gains and the cascaded user → RIS → BS channel,
//! plus BS-side separation beamforming and noisy sample synthesis.
//!
//! Phase convention: a near-field entry is `exp(-j k d_n)` with `d_n` the
//! exact element distance. Expanding `d_n ≈ r - p_n·u` shows the plane-wave
//! limit is `exp(-j k r) exp(+j k p_n·u)`, so far-field entries use
//! `exp(+j k p_n·u)` and the two models agree up to a common phase.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    direction, element_grid, region_classify, relative_spherical, RegionLabel, RisPose,
    SphericalCoord, Vec3,
};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest condition number accepted for zero-forcing separation.
pub const MAX_SEPARATION_CONDITION: f64 = 1e8;

const UNIT_MODULUS_TOL: f64 = 1e-9;

pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}

/// Spherical-wave steering vector toward `sph` (RIS-local).
pub fn nf_steering(sph: &SphericalCoord, grid: &[Vec3], wavelength: f64) -> CVector {
    let k = wavenumber(wavelength);
    let p = sph.to_local();
    CVector::from_iterator(
        grid.len(),
        grid.iter().map(|pn| C64::from_polar(1.0, -k * (p - pn).norm())),
    )
}

/// Plane-wave steering vector toward direction `(theta, phi)` (RIS-local).
pub fn ff_steering(theta: f64, phi: f64, grid: &[Vec3], wavelength: f64) -> CVector {
    plane_wave_response(&direction(theta, phi), grid, wavelength)
}

/// `exp(+j k p_n·u)` for arbitrary element coordinates and arrival direction `u`.
pub fn plane_wave_response(u: &Vec3, elements: &[Vec3], wavelength: f64) -> CVector {
    let k = wavenumber(wavelength);
    CVector::from_iterator(
        elements.len(),
        elements.iter().map(|pn| C64::from_polar(1.0, k * pn.dot(u))),
    )
}

/// Steering under the model selected by `label`.
pub fn steering(sph: &SphericalCoord, label: RegionLabel, grid: &[Vec3], wavelength: f64) -> CVector {
    match label {
        RegionLabel::NearField => nf_steering(sph, grid, wavelength),
        RegionLabel::FarField => ff_steering(sph.theta, sph.phi, grid, wavelength),
    }
}

/// Free-space gain `λ/(4πr) · exp(-j 2π r/λ)`.
pub fn path_gain(r: f64, wavelength: f64) -> Result<C64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("path length must be positive, got {r}")));
    }
    Ok(C64::from_polar(
        wavelength / (4.0 * PI * r),
        -wavenumber(wavelength) * r,
    ))
}

/// Unit-modulus reflection coefficients of one RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftVector(CVector);

impl PhaseShiftVector {
    pub fn from_phases(phases: &[f64]) -> Self {
        Self(CVector::from_iterator(
            phases.len(),
            phases.iter().map(|&a| C64::from_polar(1.0, a)),
        ))
    }

    pub fn ones(n: usize) -> Self {
        Self(CVector::from_element(n, C64::new(1.0, 0.0)))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self(CVector::from_fn(n, |_, _| {
            C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
        }))
    }

    /// Accepts values already on the unit circle (within 1e-9).
    pub fn try_from_values(values: CVector) -> Result<Self> {
        let err = values.iter().map(|b| (b.norm() - 1.0).abs()).fold(0.0, f64::max);
        if err > UNIT_MODULUS_TOL || values.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain(format!(
                "phase shifts must have unit modulus (max deviation {err:.3e})"
            )));
        }
        Ok(Self(values))
    }

    /// Elementwise normalization onto the unit circle; zero entries map to 1.
    pub fn project(values: &CVector) -> Self {
        Self(values.map(|b| {
            let m = b.norm();
            if m > 0.0 {
                b / m
            } else {
                C64::new(1.0, 0.0)
            }
        }))
    }

    /// Wraps values the caller has already normalized.
    pub(crate) fn from_unit_values(values: CVector) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &CVector {
        &self.0
    }

    pub fn into_values(self) -> CVector {
        self.0
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.0.iter().map(|b| (b.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererSet {
    pub locations: Vec<Vec3>,
    pub gain_scale: f64,
}

impl ScattererSet {
    pub fn empty() -> Self {
        Self { locations: Vec::new(), gain_scale: 0.3 }
    }
}

/// User → RIS channel: direct path plus one single-bounce term per scatterer.
/// Each term uses the near- or far-field model according to where its
/// source sits relative to the RIS.
pub fn user_ris_channel(user: &Vec3, pose: &RisPose, scat: &ScattererSet, wavelength: f64) -> Result<CVector> {
    let grid = element_grid(pose);
    let sph = relative_spherical(user, pose)?;
    let label = region_classify(&sph, pose, wavelength);
    let mut h = steering(&sph, label, &grid, wavelength) * path_gain(sph.r, wavelength)?;
    for q in &scat.locations {
        let sq = relative_spherical(q, pose)?;
        let lq = region_classify(&sq, pose, wavelength);
        let g = scat.gain_scale
            * path_gain((user - q).norm(), wavelength)?
            * path_gain(sq.r, wavelength)?;
        h += steering(&sq, lq, &grid, wavelength) * g;
    }
    Ok(h)
}

/// BS antenna array: a reference position and global element offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct BsArray {
    pub position: Vec3,
    pub elements: Vec<Vec3>,
}

impl BsArray {
    /// Planar `n1 × n2` array centered at `position` with the given boresight.
    pub fn planar(position: Vec3, normal: Vec3, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        let frame = RisPose::facing(position, normal, n1, n2, spacing)?;
        let elements = element_grid(&frame)
            .iter()
            .map(|p| frame.direction_to_global(p))
            .collect();
        Ok(Self { position, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// RIS → BS channel `H_m` (`N × V`).
#[derive(Debug, Clone, PartialEq)]
pub struct RisBsChannel {
    pub matrix: CMatrix,
}

impl RisBsChannel {
    /// Dominant left singular vector of `H^T` (length `V`).
    pub fn dominant_bs_direction(&self) -> CVector {
        let ht = self.matrix.transpose();
        let svd = ht.svd(true, false);
        let idx = svd.singular_values.imax();
        let u = svd.u.expect("requested U");
        u.column(idx).into_owned()
    }

    /// Effective RIS-side row `w · H^T` as an `N`-vector.
    pub fn effective_row(&self, weights: &CVector) -> CVector {
        &self.matrix * weights
    }
}

/// LoS plane-wave RIS→BS channel plus an optional Gaussian NLOS floor.
pub fn ris_bs_channel<R: Rng + ?Sized>(
    pose: &RisPose,
    bs: &BsArray,
    wavelength: f64,
    nlos_power: f64,
    rng: &mut R,
) -> Result<RisBsChannel> {
    if !(nlos_power >= 0.0) {
        return Err(Error::Domain(format!("NLOS power must be >= 0, got {nlos_power}")));
    }
    let sph = relative_spherical(&bs.position, pose)?;
    let grid = element_grid(pose);
    let a_ris = ff_steering(sph.theta, sph.phi, &grid, wavelength);
    let toward_ris = (pose.origin - bs.position) / sph.r;
    let a_bs = plane_wave_response(&toward_ris, &bs.elements, wavelength);
    let mut h = &a_ris * a_bs.transpose() * path_gain(sph.r, wavelength)?;
    if nlos_power > 0.0 {
        let (n, v) = h.shape();
        let scale = (nlos_power / (n * v) as f64).sqrt();
        h += CMatrix::from_fn(n, v, |_, _| complex_gaussian(rng, 1.0)) * C64::from(scale);
    }
    Ok(RisBsChannel { matrix: h })
}

/// Zero-forcing rows `w_m` with `w_m · u_i = δ_mi` over the dominant BS-side
/// directions `u_i` of each RIS.
pub fn bs_separation_weights(channels: &[RisBsChannel]) -> Result<Vec<CVector>> {
    if channels.is_empty() {
        return Ok(Vec::new());
    }
    let v = channels[0].matrix.ncols();
    if channels.iter().any(|c| c.matrix.ncols() != v) {
        return Err(Error::Shape { context: "BS antenna count", expected: v, got: 0 });
    }
    if channels.len() > v {
        return Err(Error::SeparationInfeasible { condition: f64::INFINITY });
    }
    let dirs: Vec<CVector> = channels.iter().map(RisBsChannel::dominant_bs_direction).collect();
    let u = CMatrix::from_columns(&dirs);
    let svd = u.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_SEPARATION_CONDITION) {
        return Err(Error::SeparationInfeasible { condition });
    }
    let pinv = svd
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..channels.len()).map(|m| pinv.row(m).transpose()).collect())
}

/// Rank-one plane-wave channel carrying RIS `source`'s reflection onto RIS
/// `dest`: `G = gain · a_dest a_source^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterRisPath {
    pub gain: C64,
    /// Steering of the destination RIS toward the source RIS.
    pub at_dest: CVector,
    /// Steering of the source RIS toward the destination RIS.
    pub at_source: CVector,
    /// Direction of the source RIS as seen from the destination RIS.
    pub source_angles: (f64, f64),
}

impl InterRisPath {
    pub fn matrix(&self) -> CMatrix {
        &self.at_dest * self.at_source.transpose() * self.gain
    }
}

/// `None` when the two surfaces cannot see each other's front side.
pub fn inter_ris_path(dest: &RisPose, source: &RisPose, wavelength: f64) -> Result<Option<InterRisPath>> {
    let (Ok(s_from_dest), Ok(d_from_source)) = (
        relative_spherical(&source.origin, dest),
        relative_spherical(&dest.origin, source),
    ) else {
        return Ok(None);
    };
    Ok(Some(InterRisPath {
        gain: path_gain(s_from_dest.r, wavelength)?,
        at_dest: ff_steering(s_from_dest.theta, s_from_dest.phi, &element_grid(dest), wavelength),
        at_source: ff_steering(d_from_source.theta, d_from_source.phi, &element_grid(source), wavelength),
        source_angles: (s_from_dest.theta, s_from_dest.phi),
    }))
}

/// Everything needed to synthesize one cycle of observations.
#[derive(Debug, Clone)]
pub struct LinkSet {
    /// `[user][ris]` user → RIS channels.
    pub user_channels: Vec<Vec<CVector>>,
    /// `[ris]` rows `w_m H_m^T`.
    pub effective_rows: Vec<CVector>,
    /// `[dest][source]` inter-RIS paths (diagonal is `None`).
    pub inter_ris: Vec<Vec<Option<InterRisPath>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceivedSample {
    pub value: C64,
    pub noiseless: C64,
    pub noise_variance: f64,
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// `Σ_n a_n b_n c_n` without conjugation.
fn triple_dot(a: &CVector, b: &CVector, c: &CVector) -> C64 {
    a.iter().zip(b.iter()).zip(c.iter()).map(|((x, y), z)| x * y * z).sum()
}

/// Noisy per-(user, RIS) samples for one cycle with a unit pilot.
///
/// Noise is drawn user-major, RIS-minor so that a given rng state always
/// produces the same samples.
pub fn synthesize_received<R: Rng + ?Sized>(
    links: &LinkSet,
    phase_shifts: &[PhaseShiftVector],
    noise_variance: &[Vec<f64>],
    inter_ris_enabled: bool,
    rng: &mut R,
) -> Vec<Vec<ReceivedSample>> {
    let m_count = links.effective_rows.len();
    links
        .user_channels
        .iter()
        .enumerate()
        .map(|(k, per_ris)| {
            (0..m_count)
                .map(|m| {
                    let e = &links.effective_rows[m];
                    let beta = phase_shifts[m].values();
                    let mut clean = triple_dot(e, beta, &per_ris[m]);
                    if inter_ris_enabled {
                        for (i, path) in links.inter_ris[m].iter().enumerate() {
                            if let (Some(path), true) = (path, i != m) {
                                let toward_m = triple_dot(&path.at_source, phase_shifts[i].values(), &per_ris[i]);
                                clean += triple_dot(e, beta, &path.at_dest) * path.gain * toward_m;
                            }
                        }
                    }
                    let var = noise_variance[k][m];
                    let noise = if var > 0.0 { complex_gaussian(rng, var) } else { C64::new(0.0, 0.0) };
                    ReceivedSample { value: clean + noise, noiseless: clean, noise_variance: var }
                })
                .collect()
        })
        .collect()
}

/// Mean of `|w H^T diag(β) h|²` over independent uniform phases, `Σ |e_n h_n|²`.
pub fn mean_received_power(effective_row: &CVector, user_channel: &CVector) -> f64 {
    effective_row
        .iter()
        .zip(user_channel.iter())
        .map(|(e, h)| (e * h).norm_sqr())
        .sum()
}

pub fn noise_variance_for_snr(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::fraunhofer_distance;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

    fn pose16() -> RisPose {
        RisPose::identity_at(Vec3::zeros(), 16, 16, LAMBDA / 2.0).unwrap()
    }

    fn wrap(a: f64) -> f64 {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn nf_single_element() {
        let r = 3.7;
        let s = nf_steering(&SphericalCoord::new(r, 0.2, -0.1).unwrap(), &[Vec3::zeros()], LAMBDA);
        assert_relative_eq!(s[0].re, (-wavenumber(LAMBDA) * r).cos(), epsilon = 1e-12);
        assert_relative_eq!(s[0].im, (-wavenumber(LAMBDA) * r).sin(), epsilon = 1e-12);
    }

    #[test]
    fn nf_symmetric_pair_at_boresight() {
        let grid = element_grid(&RisPose::identity_at(Vec3::zeros(), 1, 2, 0.01).unwrap());
        let s = nf_steering(&SphericalCoord::new(2.0, 0.0, 0.0).unwrap(), &grid, LAMBDA);
        assert_relative_eq!((s[0] - s[1]).norm(), 0.0, epsilon = 1e-12);
    }

    /// Largest per-element phase gap between the two models once the mean
    /// phase gap is removed.
    fn nf_ff_phase_gap(pose: &RisPose, r: f64, theta: f64, phi: f64) -> f64 {
        let grid = element_grid(pose);
        let nf = nf_steering(&SphericalCoord::new(r, theta, phi).unwrap(), &grid, LAMBDA);
        let ff = ff_steering(theta, phi, &grid, LAMBDA);
        let diffs: Vec<f64> = nf.iter().zip(ff.iter()).map(|(a, b)| (a * b.conj()).arg()).collect();
        let anchor = diffs[0];
        let unwrapped: Vec<f64> = diffs.iter().map(|d| anchor + wrap(d - anchor)).collect();
        let mean = unwrapped.iter().sum::<f64>() / unwrapped.len() as f64;
        unwrapped.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn nf_converges_to_ff_far_out() {
        let pose = pose16();
        let fr = fraunhofer_distance(&pose, LAMBDA);
        for (theta, phi) in [(0.0, 0.0), (0.4, -0.2), (-0.9, 0.5)] {
            let gaps: Vec<f64> = [10.0, 100.0, 1000.0]
                .iter()
                .map(|m| nf_ff_phase_gap(&pose, m * fr, theta, phi))
                .collect();
            // second-order term: the gap falls like 1/r
            assert!((gaps[0] / gaps[1] - 10.0).abs() < 0.2, "{gaps:?}");
            assert!((gaps[1] / gaps[2] - 10.0).abs() < 0.2, "{gaps:?}");
            assert!(gaps[2] < 1e-3);
        }
    }

    #[test]
    fn nf_ff_gap_at_hundred_fraunhofer_matches_quadratic_term() {
        // k (|p|^2 - (p.u)^2) / 2r at boresight, mean removed
        let pose = pose16();
        let grid = element_grid(&pose);
        let r = 100.0 * fraunhofer_distance(&pose, LAMBDA);
        let q: Vec<f64> = grid.iter().map(|p| wavenumber(LAMBDA) * p.norm_squared() / (2.0 * r)).collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let want = q.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        let got = nf_ff_phase_gap(&pose, r, 0.0, 0.0);
        assert!((got - want).abs() < 1e-3 * want, "{got} vs {want}");
    }


    #[test]
    fn ff_boresight_is_all_ones() {
        let a = ff_steering(0.0, 0.0, &element_grid(&pose16()), LAMBDA);
        assert!(a.iter().all(|x| (x - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn ff_conjugate_is_mirrored_direction() {
        let grid = element_grid(&pose16());
        let a = ff_steering(0.3, 0.2, &grid, LAMBDA);
        let b = ff_steering(-0.3, -0.2, &grid, LAMBDA);
        assert!((a.conjugate() - b).map(|z| z.norm()).max() < 1e-12);
    }

    #[test]
    fn ff_line_array_matches_dirichlet_kernel() {
        let n = 16;
        let d = LAMBDA / 2.0;
        let grid = element_grid(&RisPose::identity_at(Vec3::zeros(), 1, n, d).unwrap());
        let (t1, t2) = (0.1, 0.35);
        let a1 = ff_steering(t1, 0.0, &grid, LAMBDA);
        let a2 = ff_steering(t2, 0.0, &grid, LAMBDA);
        let got = a1.dotc(&a2).norm() / n as f64;
        // |sin(Nψ/2) / (N sin(ψ/2))| with ψ the inter-element phase step
        let psi = wavenumber(LAMBDA) * d * (t2.sin() - t1.sin());
        let want = ((n as f64 * psi / 2.0).sin() / (n as f64 * (psi / 2.0).sin())).abs();
        assert!(got < 1.0);
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn path_gain_scaling() {
        let g1 = path_gain(2.0, LAMBDA).unwrap();
        let g2 = path_gain(4.0, LAMBDA).unwrap();
        assert_relative_eq!(g2.norm(), g1.norm() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(path_gain(LAMBDA / (4.0 * PI), LAMBDA).unwrap().norm(), 1.0, epsilon = 1e-14);
        assert!(wrap(path_gain(LAMBDA, LAMBDA).unwrap().arg()).abs() < 1e-9);
        assert!(path_gain(0.0, LAMBDA).is_err());
        assert!(path_gain(-1.0, LAMBDA).is_err());
    }

    #[test]
    fn user_channel_scatterers() {
        let pose = pose16();
        let user = Vec3::new(3.0, 0.5, 0.2);
        let none = ScattererSet::empty();
        let h0 = user_ris_channel(&user, &pose, &none, LAMBDA).unwrap();
        let sph = relative_spherical(&user, &pose).unwrap();
        let direct = ff_steering(sph.theta, sph.phi, &element_grid(&pose), LAMBDA) * path_gain(sph.r, LAMBDA).unwrap();
        assert!((&h0 - &direct).map(|z| z.norm()).max() < 1e-18);

        let q = Vec3::new(2.0, -1.0, 0.0);
        let silent = ScattererSet { locations: vec![q], gain_scale: 0.0 };
        assert_eq!(user_ris_channel(&user, &pose, &silent, LAMBDA).unwrap(), h0);

        let loud = ScattererSet { locations: vec![q], gain_scale: 0.3 };
        let h1 = user_ris_channel(&user, &pose, &loud, LAMBDA).unwrap();
        let scatter = &h1 - &h0;
        assert!(0.3 * path_gain((user - q).norm(), LAMBDA).unwrap().norm() < 1.0);
        assert!(h0.norm() > scatter.norm());
    }

    #[test]
    fn user_behind_ris_propagates_error() {
        let r = user_ris_channel(&Vec3::new(-1.0, 0.0, 0.0), &pose16(), &ScattererSet::empty(), LAMBDA);
        assert!(matches!(r, Err(Error::HalfSpaceViolation { .. })));
    }

    fn bs() -> BsArray {
        BsArray::planar(Vec3::new(5.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), 4, 4, LAMBDA / 2.0).unwrap()
    }

    #[test]
    fn los_channel_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pose = RisPose::facing(Vec3::new(0.0, 2.0, 0.0), Vec3::new(1.0, -0.3, 0.0), 16, 16, LAMBDA / 2.0).unwrap();
        let h = ris_bs_channel(&pose, &bs(), LAMBDA, 0.0, &mut rng).unwrap();
        let sv = h.matrix.clone().svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[1] < 1e-9 * s[0]);
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let pose = pose16();
        let a = ris_bs_channel(&pose, &bs(), LAMBDA, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ris_bs_channel(&pose, &bs(), LAMBDA, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nlos_floor_power_concentrates() {
        let pose = RisPose::identity_at(Vec3::zeros(), 4, 4, LAMBDA / 2.0).unwrap();
        let nlos = 2.5;
        let los = ris_bs_channel(&pose, &bs(), LAMBDA, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut total = 0.0;
        for seed in 0..100 {
            let h = ris_bs_channel(&pose, &bs(), LAMBDA, nlos, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let g = &h.matrix - &los.matrix;
            let p = g.norm_squared();
            assert!((p - nlos).abs() < 0.2 * nlos, "seed {seed}: {p}");
            total += p;
        }
        assert!((total / 100.0 - nlos).abs() < 0.05 * nlos);
    }

    #[test]
    fn behind_bs_is_rejected() {
        let pose = RisPose::identity_at(Vec3::new(10.0, 0.0, 0.0), 4, 4, 0.01).unwrap();
        let r = ris_bs_channel(&pose, &bs(), LAMBDA, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::HalfSpaceViolation { .. })));
    }

    fn ris_at(y: f64) -> RisPose {
        RisPose::facing(Vec3::new(0.0, y, 0.0), Vec3::new(1.0, -0.1 * y, 0.0), 8, 8, LAMBDA / 2.0).unwrap()
    }

    #[test]
    fn zf_single_ris() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = ris_bs_channel(&ris_at(1.0), &bs(), LAMBDA, 0.0, &mut rng).unwrap();
        let w = bs_separation_weights(std::slice::from_ref(&h)).unwrap();
        let u = h.dominant_bs_direction();
        assert_relative_eq!((w[0].transpose() * &u)[0].re, 1.0, epsilon = 1e-9);
        // proportional to conj(u)
        let ratio = w[0][0] / u[0].conj();
        assert!((&w[0] - u.conjugate() * ratio).map(|z| z.norm()).max() < 1e-12);
    }

    #[test]
    fn zf_orthogonal_directions_are_conjugates() {
        let u1 = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let u2 = CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.0, 1.0)]);
        let chans: Vec<RisBsChannel> = [u1.clone(), u2.clone()]
            .iter()
            .map(|u| RisBsChannel { matrix: CVector::from_element(3, C64::new(1.0, 0.0)) * u.transpose() })
            .collect();
        let w = bs_separation_weights(&chans).unwrap();
        for (m, wm) in w.iter().enumerate() {
            let um = chans[m].dominant_bs_direction();
            assert!((wm - um.conjugate()).map(|z| z.norm()).max() < 1e-12);
        }
    }

    #[test]
    fn zf_multi_ris_is_biorthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chans: Vec<RisBsChannel> = [-2.0, 0.5, 2.0]
            .iter()
            .map(|&y| ris_bs_channel(&ris_at(y), &bs(), LAMBDA, 0.0, &mut rng).unwrap())
            .collect();
        let w = bs_separation_weights(&chans).unwrap();
        for (m, wm) in w.iter().enumerate() {
            for (i, ch) in chans.iter().enumerate() {
                let v = (wm.transpose() * ch.dominant_bs_direction())[0];
                let want = if m == i { 1.0 } else { 0.0 };
                assert!((v - C64::new(want, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zf_collinear_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = ris_bs_channel(&ris_at(1.0), &bs(), LAMBDA, 0.0, &mut rng).unwrap();
        let b = RisBsChannel { matrix: a.matrix.clone() * C64::new(0.0, 2.0) };
        assert!(matches!(bs_separation_weights(&[a, b]), Err(Error::SeparationInfeasible { .. })));
    }

    fn scalar_links(h: C64, e: C64) -> LinkSet {
        LinkSet {
            user_channels: vec![vec![CVector::from_element(1, h)]],
            effective_rows: vec![CVector::from_element(1, e)],
            inter_ris: vec![vec![None]],
        }
    }

    #[test]
    fn noiseless_scalar_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let beta = PhaseShiftVector::from_phases(&[0.7]);
        let h = C64::new(0.3, -0.2);
        let s = synthesize_received(&scalar_links(h, C64::new(1.0, 0.0)), &[beta.clone()], &[vec![0.0]], false, &mut rng);
        assert_eq!(s[0][0].value, beta.values()[0] * h);
    }

    #[test]
    fn samples_are_linear_in_user_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let beta = [PhaseShiftVector::from_phases(&[1.1])];
        let c = C64::new(-0.4, 2.0);
        let h = C64::new(0.3, -0.2);
        let e = C64::new(0.5, 0.1);
        let a = synthesize_received(&scalar_links(h, e), &beta, &[vec![0.0]], false, &mut rng);
        let b = synthesize_received(&scalar_links(h * c, e), &beta, &[vec![0.0]], false, &mut rng);
        assert!((b[0][0].value - a[0][0].value * c).norm() < 1e-15);
    }

    #[test]
    fn same_seed_same_samples() {
        let links = scalar_links(C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let beta = [PhaseShiftVector::random(1, &mut rng)];
            synthesize_received(&links, &beta, &[vec![0.1]], false, &mut rng)
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let links = scalar_links(C64::new(0.2, 0.1), C64::new(1.0, 0.0));
        let beta = [PhaseShiftVector::ones(1)];
        let var = 0.37;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = synthesize_received(&links, &beta, &[vec![var]], false, &mut rng)[0][0];
            acc += (s.value - s.noiseless).norm_sqr();
        }
        let emp = acc / n as f64;
        assert!((emp - var).abs() < 0.05 * var, "{emp}");
    }

    #[test]
    fn phase_shift_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = PhaseShiftVector::random(64, &mut rng);
        assert!(b.max_modulus_error() < 1e-12);
        assert!(PhaseShiftVector::try_from_values(CVector::from_element(2, C64::new(1.1, 0.0))).is_err());
        let p = PhaseShiftVector::project(&CVector::from_vec(vec![C64::new(3.0, 4.0), C64::new(0.0, 0.0)]));
        assert_relative_eq!(p.values()[0].re, 0.6, epsilon = 1e-15);
        assert_eq!(p.values()[1], C64::new(1.0, 0.0));
    }

    #[test]
    fn mean_power_matches_random_phase_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = CVector::from_fn(32, |_, _| complex_gaussian(&mut rng, 1.0));
        let h = CVector::from_fn(32, |_, _| complex_gaussian(&mut rng, 1.0));
        let want = mean_received_power(&e, &h);
        let trials = 20_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let b = PhaseShiftVector::random(32, &mut rng);
            acc += triple_dot(&e, b.values(), &h).norm_sqr();
        }
        assert!((acc / trials as f64 - want).abs() < 0.05 * want);
    }
}
