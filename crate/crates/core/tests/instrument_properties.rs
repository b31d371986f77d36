use modesep::instrument::*;
use modesep::scene::{GaussianBeam, ModalPowers, ModeIndex, Scene};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const W0: f64 = 1135.0;

proptest! {
    #[test]
    fn demux_never_amplifies(
        powers in prop::collection::vec(0.0..1e6f64, 5),
        leak in 0.0..1.0f64,
        transmission in 0.01..1.0f64,
    ) {
        let model = DemuxModel::ideal(&ModeIndex::MEASURED)
            .with_transmission(transmission)
            .with_uniform_leak(leak)
            .unwrap();
        let input: ModalPowers = ModeIndex::MEASURED.iter().copied().zip(powers).collect();
        let out = demux(&input, &model).unwrap();
        prop_assert!(out.iter().all(|(_, p)| p >= 0.0));
        prop_assert!(out.total() <= transmission * input.total() * (1.0 + 1e-12));
    }

    #[test]
    fn symmetric_pair_is_invisible_to_quadrant(d in 0.0..4000.0f64, p in 1e-3..1e12f64, mismatch in 0.9..1.1f64) {
        let a = GaussianBeam::with_mismatch(-0.5 * d, W0, p, mismatch).unwrap();
        let b = GaussianBeam::with_mismatch(0.5 * d, W0, p, mismatch).unwrap();
        let s = combined_difference_signal(&Scene::incoherent(a, b).unwrap(), &QuadrantDetectorModel::noiseless());
        prop_assert_eq!(s, 0.0);
    }

    #[test]
    fn quadrant_round_trip(b in -1.99..1.99f64) {
        let beam = GaussianBeam::new(b * W0, W0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = quadrant_position(&beam, &QuadrantDetectorModel::noiseless(), &mut rng).unwrap();
        prop_assert!((x - b * W0).abs() <= 1e-9 * W0, "{} vs {}", x, b * W0);
    }
}

#[test]
fn spad_counts_are_poissonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = SpadModel {
        quantum_efficiency: 0.25,
        dark_count_rate: 50.0,
    };
    for flux in [10.0, 400.0, 140_000.0] {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| read_spad(flux, 0.1, &model, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 0.25 * flux * 0.1 + 50.0 * 0.1;
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean} vs {expected}");
        assert!((var / mean - 1.0).abs() < 0.05, "var/mean {}", var / mean);
    }
}

#[test]
fn dark_subtracted_flux_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let det = Detector::Spad(SpadModel {
        quantum_efficiency: 0.25,
        dark_count_rate: 392.0,
    });
    let n = 20_000;
    let flux = 5_000.0;
    let mean = (0..n).map(|_| det.read_flux(flux, 0.1, &mut rng)).sum::<f64>() / n as f64;
    let se = (det.flux_variance(flux, 0.1) / n as f64).sqrt();
    assert!((mean - flux).abs() < 4.0 * se, "{mean} vs {flux} (se {se})");
}
