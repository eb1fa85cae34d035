use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risloc::channel::{CMatrix, CVector, PhaseShiftVector, C64, SPEED_OF_LIGHT};
use risloc::ris_opt::{
    admm_optimize, fim, jacobian, sidelobe_response, sidelobe_row, AdmmSettings, CrbTerm, LinkModel,
};
use risloc::scene::{element_grid, RegionLabel, RisPose, Vec3};

const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

fn pose(n: usize) -> RisPose {
    RisPose::identity_at(Vec3::zeros(), n, n, LAMBDA / 2.0).unwrap()
}

/// Effective row with entries near 1e-3, the scale a BS link produces.
fn random_row(n: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(n, |_, _| C64::from_polar(rng.random_range(0.5e-3..1.5e-3), rng.random_range(0.0..6.3)))
}

fn link(n: usize, user: Vec3, label: Option<RegionLabel>, rng: &mut ChaCha8Rng) -> LinkModel {
    let p = pose(n);
    let e = random_row(n * n, rng);
    let mut l = LinkModel::new(&user, &p, label, e, 1.0, LAMBDA).unwrap();
    // noise at a tenth of the per-cycle signal power
    l.noise_variance = l.response().norm_squared() / (n * n) as f64 * 0.1;
    l
}

fn history(n: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<PhaseShiftVector> {
    (0..c).map(|_| PhaseShiftVector::random(n, rng)).collect()
}

fn stacked(link: &LinkModel, history: &[PhaseShiftVector]) -> CVector {
    let s = link.response();
    CVector::from_iterator(history.len(), history.iter().map(|b| b.values().dot(&s)))
}

fn param(l: &mut LinkModel, j: usize) -> &mut f64 {
    match (l.label, j) {
        (RegionLabel::NearField, 0) => &mut l.location.r,
        (RegionLabel::NearField, 1) | (RegionLabel::FarField, 0) => &mut l.location.theta,
        _ => &mut l.location.phi,
    }
}

/// Central differences of the noiseless samples with the path gain held fixed.
fn numeric_jacobian(link: &LinkModel, history: &[PhaseShiftVector]) -> CMatrix {
    let d = link.dim();
    let mut out = CMatrix::zeros(history.len(), d);
    for j in 0..d {
        let (mut plus, mut minus) = (link.clone(), link.clone());
        let base = *param(&mut plus, j);
        let h = 1e-6 * base.abs().max(1.0);
        *param(&mut plus, j) = base + h;
        *param(&mut minus, j) = base - h;
        let col = (stacked(&plus, history) - stacked(&minus, history)) / C64::from(2.0 * h);
        out.set_column(j, &col);
    }
    out
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = [
        (Vec3::new(0.30, 0.15, 0.04), None),
        (Vec3::new(0.5, -0.2, 0.1), None),
        (Vec3::new(3.0, 0.8, -0.5), Some(RegionLabel::FarField)),
        (Vec3::new(6.0, -1.0, 0.2), Some(RegionLabel::FarField)),
    ];
    for (user, label) in cases {
        let l = link(8, user, label, &mut rng);
        let h = history(64, 5, &mut rng);
        let analytic = jacobian(&l, &h);
        let numeric = numeric_jacobian(&l, &h);
        let scale = analytic.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = (&analytic - &numeric).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err / scale < 1e-4, "{user:?}: relative error {:.3e}", err / scale);
    }
}

#[test]
fn fim_is_positive_definite_once_cycles_cover_the_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = link(8, Vec3::new(0.4, 0.1, 0.0), None, &mut rng);
    assert_eq!(l.label, RegionLabel::NearField);
    let h = history(64, 3, &mut rng);
    let j = fim(&l, &h).unwrap();
    let eig = j.matrix.symmetric_eigenvalues();
    assert!(eig.min() > 0.0);
}

#[test]
fn crb_only_optimization_never_increases_the_bound() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let l = link(8, Vec3::new(0.35, 0.2, -0.1), None, &mut rng);
        let past = history(64, 3, &mut rng);
        let term = CrbTerm::new(&l, &past).unwrap();
        let init = PhaseShiftVector::random(64, &mut rng);
        let out = admm_optimize(std::slice::from_ref(&term), &[], &init, &AdmmSettings::default()).unwrap();
        let (before, after) = (term.value(init.values()), term.value(out.beta().values()));
        assert!(after <= before, "seed {seed}: {after} > {before}");
        assert!(out.beta().max_modulus_error() < 1e-12);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn admm_suppresses_the_sidelobe_and_lowers_the_bound() {
    let n = 16;
    let elements = element_grid(&pose(n));
    let (theta, phi) = (0.45, -0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let l = link(n, Vec3::new(0.6, 0.1, 0.05), None, &mut rng);
    let e = l.effective_row.clone();
    let row = sidelobe_row(&e, &elements, theta, phi, LAMBDA);
    let past = history(n * n, 3, &mut rng);
    let term = CrbTerm::new(&l, &past).unwrap();

    let random: Vec<f64> = (0..100)
        .map(|_| sidelobe_response(&PhaseShiftVector::random(n * n, &mut rng), &e, &elements, theta, phi, LAMBDA).norm())
        .collect();
    let mut optimized = Vec::new();
    let mut improved = 0;
    for _ in 0..20 {
        let init = PhaseShiftVector::random(n * n, &mut rng);
        let out = admm_optimize(std::slice::from_ref(&term), std::slice::from_ref(&row), &init, &AdmmSettings::default())
            .unwrap();
        optimized.push(sidelobe_response(out.beta(), &e, &elements, theta, phi, LAMBDA).norm());
        if term.value(out.beta().values()) < term.value(init.values()) {
            improved += 1;
        }
    }
    let (opt, rnd) = (median(optimized), median(random));
    assert!(opt < rnd, "optimized median {opt:.3e} vs random {rnd:.3e}");
    assert_eq!(improved, 20);
}
