use modesep::scene::*;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const W0: f64 = 1135.0;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn signal_power_even_in_separation(d in 0.0..2500.0f64) {
        let plus = mode_powers(&Scene::symmetric(d, W0, 1.0).unwrap(), &[ModeIndex::SIGNAL]).unwrap();
        let a = GaussianBeam::new(0.5 * d, W0, 0.5).unwrap();
        let b = GaussianBeam::new(-0.5 * d, W0, 0.5).unwrap();
        let minus = mode_powers(&Scene::incoherent(a, b).unwrap(), &[ModeIndex::SIGNAL]).unwrap();
        prop_assert!(rel(plus.get(ModeIndex::SIGNAL), minus.get(ModeIndex::SIGNAL)) < 1e-12
            || plus.get(ModeIndex::SIGNAL) < 1e-300);
    }

    #[test]
    fn odd_orders_are_odd(x in -3000.0..3000.0f64, n in 0u32..12) {
        let p = coupling_amplitude(x, W0, n).unwrap();
        let m = coupling_amplitude(-x, W0, n).unwrap();
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        prop_assert!((p - sign * m).abs() <= 1e-15 * p.abs().max(1e-300));
    }

    #[test]
    fn completeness_to_order_fifty(beta in 0.0..3.0f64) {
        let sum: f64 = (0..=50).map(|n| coupling_amplitude(beta * W0, W0, n).unwrap().powi(2)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_scene_matches_closed_form(d in 1.0..3000.0f64, p in 1.0..1e15f64) {
        let numeric = mode_powers(&Scene::symmetric(d, W0, p).unwrap(), &[ModeIndex::SIGNAL]).unwrap();
        let closed = i01_analytic(d, W0, p).unwrap();
        prop_assert!(rel(numeric.get(ModeIndex::SIGNAL), closed) < 1e-12);
    }

    #[test]
    fn matched_overlap_follows_coupling_law(x in -2000.0..2000.0f64, n in 0u32..6) {
        let numeric = overlap_amplitude(x, W0, W0, n).unwrap();
        let law = coupling_amplitude(x, W0, n).unwrap();
        prop_assert!((numeric - law).abs() < 1e-8);
    }
}

#[test]
fn phase_average_equals_incoherent_power() {
    let (d, pa, pb) = (600.0, 0.7, 0.3);
    let a = GaussianBeam::new(-0.5 * d, W0, pa).unwrap();
    let b = GaussianBeam::new(0.5 * d, W0, pb).unwrap();
    let incoherent = mode_powers(&Scene::incoherent(a, b).unwrap(), &ModeIndex::MEASURED).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut sums = [0.0; 5];
    for _ in 0..n {
        let phi = rng.random_range(-PI..PI);
        let coherent = mode_powers(&Scene::new(a, b, 1.0, phi).unwrap(), &ModeIndex::MEASURED).unwrap();
        for (s, m) in sums.iter_mut().zip(ModeIndex::MEASURED) {
            *s += coherent.get(m);
        }
    }
    for (s, m) in sums.iter().zip(ModeIndex::MEASURED) {
        let avg = s / n as f64;
        assert!(
            rel(avg, incoherent.get(m)) < 0.01,
            "{m}: {avg} vs {}",
            incoherent.get(m)
        );
    }
}

#[test]
fn coherent_in_phase_pair_has_no_signal_power() {
    let a = GaussianBeam::new(-200.0, W0, 1.0).unwrap();
    let b = GaussianBeam::new(200.0, W0, 1.0).unwrap();
    let p = mode_powers(&Scene::new(a, b, 1.0, 0.0).unwrap(), &[ModeIndex::SIGNAL]).unwrap();
    assert!(p.get(ModeIndex::SIGNAL).abs() < 1e-15);
}
