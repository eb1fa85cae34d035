use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risloc::channel::{user_ris_channel, CMatrix, CVector, PhaseShiftVector, ScattererSet, C64, SPEED_OF_LIGHT};
use risloc::locator::{build_dictionary, effective_sensing_matrix, omp_localize, AtomLabel, DictionaryMode, GridSpec};
use risloc::scene::{spherical_to_global, RisPose, Vec3};

const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

fn pose(n: usize) -> RisPose {
    RisPose::identity_at(Vec3::zeros(), n, n, LAMBDA / 2.0).unwrap()
}

fn grid(n_r: usize, half_deg: f64, step_deg: f64) -> GridSpec {
    let (h, s) = (half_deg.to_radians(), step_deg.to_radians());
    GridSpec { n_r, r_min: None, theta_min: -h, theta_max: h, delta_theta: s, phi_min: -h, phi_max: h, delta_phi: s }
}

fn history(n: usize, c: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let cols: Vec<CVector> = (0..c).map(|_| PhaseShiftVector::random(n, rng).into_values()).collect();
    CMatrix::from_columns(&cols)
}

fn unit_row(n: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..6.3)))
}

/// Column maximizing `|a_j^H g| / ‖a_j‖`, lowest index on ties.
fn matched_filter(a: &CMatrix, g: &CVector) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..a.ncols() {
        let col = a.column(j);
        let score = col.dotc(g).norm() / col.norm();
        if score > best.1 {
            best = (j, score);
        }
    }
    best.0
}

#[test]
fn every_atom_is_recovered_exactly_when_the_history_has_full_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = pose(4);
    let dict = build_dictionary(&p, &grid(2, 20.0, 20.0), LAMBDA, DictionaryMode::Hybrid).unwrap();
    assert_eq!((dict.s1, dict.s2), (18, 9));
    let b = history(16, 16, &mut rng);
    let e = unit_row(16, &mut rng);
    let a = effective_sensing_matrix(&dict, &b, &e).unwrap();
    for j in 0..dict.len() {
        let coeff = C64::from_polar(rng.random_range(0.1..2.0), rng.random_range(0.0..6.3));
        let g = a.column(j) * coeff;
        let est = omp_localize(&g, &a, 1, &dict.labels, 0).unwrap();
        assert_eq!(est.atom, j);
        assert_eq!(est.label, dict.labels[j]);
        assert!((est.coefficient - coeff).norm() < 1e-9 * coeff.norm());
        assert!(*est.residual_norms.last().unwrap() < 1e-9 * g.norm());
    }
}

#[test]
fn near_field_user_on_a_grid_point_keeps_its_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = pose(8);
    let dict = build_dictionary(&p, &grid(3, 20.0, 10.0), LAMBDA, DictionaryMode::Hybrid).unwrap();
    let j = 7;
    let AtomLabel::Near(s) = dict.labels[j] else { panic!("expected a near-field atom") };
    let user = spherical_to_global(&s, &p);
    let h = user_ris_channel(&user, &p, &ScattererSet::empty(), LAMBDA).unwrap();
    let b = history(64, 64, &mut rng);
    let e = unit_row(64, &mut rng);
    let g = b.transpose() * e.component_mul(&h);
    let a = effective_sensing_matrix(&dict, &b, &e).unwrap();
    let est = omp_localize(&g, &a, 2, &dict.labels, 0).unwrap();
    assert_eq!(est.atom, j);
}

#[test]
fn far_field_user_on_the_angle_grid_matches_the_matched_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = pose(16);
    let dict = build_dictionary(&p, &grid(4, 30.0, 5.0), LAMBDA, DictionaryMode::Hybrid).unwrap();
    let (theta, phi) = (10f64.to_radians(), -5f64.to_radians());
    let user = p.to_global(&(risloc::scene::direction(theta, phi) * 200.0));
    let h = user_ris_channel(&user, &p, &ScattererSet::empty(), LAMBDA).unwrap();
    for c in [2, 4, 8, 16] {
        let b = history(256, c, &mut rng);
        let e = unit_row(256, &mut rng);
        let g = b.transpose() * e.component_mul(&h);
        let a = effective_sensing_matrix(&dict, &b, &e).unwrap();
        let est = omp_localize(&g, &a, 1, &dict.labels, 0).unwrap();
        assert_eq!(est.atom, matched_filter(&a, &g), "c = {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_pick_omp_is_the_matched_filter(seed in any::<u64>(), c in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = pose(4);
        let dict = build_dictionary(&p, &grid(2, 20.0, 10.0), LAMBDA, DictionaryMode::Hybrid).unwrap();
        let b = history(16, c, &mut rng);
        let e = unit_row(16, &mut rng);
        let a = effective_sensing_matrix(&dict, &b, &e).unwrap();
        let g = CVector::from_fn(c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let est = omp_localize(&g, &a, 1, &dict.labels, 0).unwrap();
        let oracle = matched_filter(&a, &g);
        // equal scores can only differ in the last bits
        let score = |j: usize| a.column(j).dotc(&g).norm() / a.column(j).norm();
        prop_assert!(est.atom == oracle || (score(est.atom) - score(oracle)).abs() < 1e-12 * score(oracle));
    }

    #[test]
    fn residual_never_grows(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = pose(4);
        let dict = build_dictionary(&p, &grid(2, 20.0, 10.0), LAMBDA, DictionaryMode::Hybrid).unwrap();
        let b = history(16, 10, &mut rng);
        let e = unit_row(16, &mut rng);
        let a = effective_sensing_matrix(&dict, &b, &e).unwrap();
        let g = CVector::from_fn(10, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let est = omp_localize(&g, &a, k, &dict.labels, 0).unwrap();
        prop_assert_eq!(est.support.len(), k);
        for w in est.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}
