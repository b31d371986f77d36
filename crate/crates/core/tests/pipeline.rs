use modesep::exec::{Execution, SeedStream};
use modesep::harness::{calibrate, two_source_curve, ExperimentConfig};
use modesep::instrument::{Detector, PhotodiodeModel, QuadrantDetectorModel, SpadModel};
use modesep::pipeline::*;
use modesep::scene::Scene;
use proptest::prelude::*;

fn noiseless(mut c: ExperimentConfig) -> ExperimentConfig {
    c.detector = Detector::Photodiode(PhotodiodeModel::noiseless());
    c.quadrant = QuadrantDetectorModel::noiseless();
    c
}

fn curve_for(c: &ExperimentConfig, seed: u64) -> TwoSourceCurve {
    let s = SeedStream::new(seed);
    two_source_curve(c, &calibrate(c, &s, Execution::default()).unwrap()).unwrap()
}

fn expected_ratio(c: &ExperimentConfig, scene: &Scene) -> f64 {
    let inst = c.instrument().unwrap();
    let out = inst.output_fluxes(scene).unwrap();
    inst.expected_window(&out, scene.total_power()).ratio().unwrap()
}

#[test]
fn noiseless_round_trip_over_branch() {
    let c = noiseless(ExperimentConfig::high_flux());
    let g = curve_for(&c, 1);
    let (lo, hi) = g.monotone_branch();
    for k in 1..200 {
        let d = lo + (hi - lo) * k as f64 / 200.0;
        let inv = invert(&g, expected_ratio(&c, &c.scene(d).unwrap())).unwrap();
        assert_eq!(inv.clamp, Clamp::None);
        assert!((inv.separation - d).abs() < 1e-3, "{d}: {}", inv.separation);
    }
}

#[test]
fn estimator_is_consistent() {
    let mut c = ExperimentConfig::high_flux();
    c.repetitions = 10_000;
    let clean = noiseless(c.clone());
    let g = curve_for(&clean, 2);
    let d = 100.0;
    let est = estimate_separation(
        &c.scene(d).unwrap(),
        &c.instrument().unwrap(),
        &g,
        &c.estimate_settings(),
        &SeedStream::new(5),
        0,
    )
    .unwrap();
    let bound = 3.0 * est.d_sensitivity / (est.repetitions as f64).sqrt();
    assert!((est.d_hat - d).abs() < bound, "bias {} vs {bound}", est.d_hat - d);
}

fn low_flux_without_dark(photons: f64, repetitions: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::low_flux();
    c.photons = photons;
    c.repetitions = repetitions;
    c.detector = Detector::Spad(SpadModel::default());
    c
}

fn sensitivity(c: &ExperimentConfig, g: &TwoSourceCurve, d: f64, seed: u64) -> EstimationResult {
    estimate_separation(
        &c.scene(d).unwrap(),
        &c.instrument().unwrap(),
        g,
        &c.estimate_settings(),
        &SeedStream::new(seed),
        0,
    )
    .unwrap()
}

#[test]
fn sensitivity_scales_as_inverse_root_photons() {
    let d = 600.0;
    let g = curve_for(&noiseless(ExperimentConfig::low_flux()), 3);
    let scaled: Vec<f64> = [1e3, 1e4, 1e5]
        .iter()
        .map(|&n| {
            let est = sensitivity(&low_flux_without_dark(n, 2000), &g, d, 8);
            assert!(est.clamp_fraction < 0.01);
            est.d_sensitivity * n.sqrt()
        })
        .collect();
    for s in &scaled[1..] {
        assert!((s / scaled[0] - 1.0).abs() < 0.1, "{scaled:?}");
    }
}

#[test]
fn monte_carlo_matches_error_propagation() {
    let c = low_flux_without_dark(3500.0, 2000);
    let g = curve_for(&noiseless(ExperimentConfig::low_flux()), 3);
    for d in [500.0, 700.0] {
        let est = sensitivity(&c, &g, d, 9);
        let model =
            modesep::bounds::spade_sensitivity_model(d, c.waist_um, c.detector_flux(), c.t_int, &c.detector).unwrap();
        assert!(est.clamp_fraction == 0.0);
        assert!(
            (est.d_sensitivity / model - 1.0).abs() < 0.1,
            "{d}: {} vs {model}",
            est.d_sensitivity
        );
    }
}

#[test]
fn noiseless_differential_slope_is_one() {
    let c = noiseless(ExperimentConfig::high_flux());
    let g = curve_for(&c, 4);
    let r = differential_measurement(
        &c.scene(120.0).unwrap(),
        &c.instrument().unwrap(),
        &g,
        0.2,
        10,
        &c.estimate_settings(),
        &SeedStream::new(1),
    )
    .unwrap();
    assert!((r.fit.slope - 1.0).abs() < 1e-3, "{:?}", r.fit);
    assert!(r.fit.r_squared > 0.9999);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn power_scale_does_not_change_estimates(d in 5.0..190.0f64, k in 1e-3..1e3f64) {
        let base = noiseless(ExperimentConfig::high_flux());
        let mut scaled = base.clone();
        scaled.photons *= k;
        let g = curve_for(&base, 6);
        let a = sensitivity(&base, &g, d, 1);
        let b = sensitivity(&scaled, &g, d, 1);
        prop_assert!((a.d_hat - b.d_hat).abs() < 1e-9 * d);
        prop_assert_eq!(a.d_sensitivity, 0.0);
        prop_assert_eq!(b.d_sensitivity, 0.0);
    }
}
