//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use modesep::bounds::*;
use modesep::exec::{Execution, SeedStream};
use modesep::harness::config::{HIGH_FLUX_ELECTRONIC_NOISE, LOW_FLUX_DARK_RATE};
use modesep::harness::*;
use modesep::instrument::{Detector, PhotodiodeModel, QuadrantDetectorModel, SpadModel};
use modesep::pipeline::*;
use modesep::scene::{mode_powers, GaussianBeam, ModeIndex, Scene};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W0: f64 = 1135.0;
const SEED: u64 = 20_240_611;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn curve(c: &ExperimentConfig, streams: &SeedStream) -> TwoSourceCurve {
    two_source_curve(c, &calibrate(c, streams, Execution::default()).unwrap()).unwrap()
}

fn estimate(c: &ExperimentConfig, g: &TwoSourceCurve, d: f64, streams: &SeedStream, key: u64) -> EstimationResult {
    estimate_separation(
        &c.scene(d).unwrap(),
        &c.instrument().unwrap(),
        g,
        &c.estimate_settings(),
        streams,
        key,
    )
    .unwrap()
}

fn qcrb_points() -> Outcome {
    let low = qcrb(3500.0, W0).unwrap();
    let high = qcrb(1e13, W0).unwrap();
    let high_nm = high * 1e3;
    // one significant figure: 0.36 nm reads as 0.4 nm
    let rounded = format!("{high_nm:.1}");
    check(
        (low / 19.0 - 1.0).abs() < 0.02 && (low - 19.2).abs() < 0.05 && rounded == "0.4",
        format!("qcrb(3500) = {low:.4} um, qcrb(1e13) = {high_nm:.4} nm"),
    )
}

fn riemann_fisher(d: f64, w: f64, points: usize) -> f64 {
    let g = |z: f64| (2.0 / PI).sqrt() / w * (-2.0 * z * z / (w * w)).exp();
    let half = 10.0 * w + d;
    let dx = 2.0 * half / points as f64;
    (0..points)
        .map(|i| {
            let x = -half + (i as f64 + 0.5) * dx;
            let (za, zb) = (x - 0.5 * d, x + 0.5 * d);
            let intensity = 0.5 * g(za) + 0.5 * g(zb);
            let slope = 0.5 * (2.0 * za / (w * w) * g(za) - 2.0 * zb / (w * w) * g(zb));
            slope * slope / intensity * dx
        })
        .sum()
}

fn direct_imaging_bound() -> Outcome {
    let far = fisher_direct_imaging_per_photon(20.0 * W0, W0, 0.5, 0.5).unwrap() * W0 * W0;
    let zero = fisher_direct_imaging_per_photon(0.0, W0, 0.5, 0.5).unwrap() * W0 * W0;
    let mut worst: f64 = 0.0;
    for r in [0.1, 0.5, 1.0, 2.0] {
        let f = fisher_direct_imaging(r * W0, W0, 0.5, 0.5).unwrap();
        worst = worst.max((f / riemann_fisher(r * W0, W0, 100_000) - 1.0).abs());
    }
    check(
        (far - 1.0).abs() < 5e-3 && zero.abs() < 1e-6 && worst < 1e-4,
        format!("w^2 F(20w) = {far:.5}, w^2 F(0) = {zero:.2e}, oracle rel. dev. {worst:.2e}"),
    )
}

fn crossover() -> Outcome {
    let mut c = ExperimentConfig::low_flux();
    let q = qcrb(c.photons, W0).unwrap();
    let dark = dark_rate_for_sensitivity(1.2 * q, 500.0, W0, c.detector_flux(), c.t_int, 0.25).unwrap();
    c.detector = Detector::Spad(SpadModel {
        quantum_efficiency: 0.25,
        dark_count_rate: dark,
    });
    let streams = SeedStream::new(SEED);
    let g = curve(&c, &streams);
    let mut long = c.clone();
    long.repetitions = 2000;
    let at500 = estimate(&long, &g, 500.0, &streams, 99).d_sensitivity / q;
    let mut detail = format!("dark {dark:.1}/s (default {LOW_FLUX_DARK_RATE}), sim/QCRB at 500 um = {at500:.3};");
    let mut ok = (1.1..=1.3).contains(&at500);
    let detected = c.photons / c.t_int;
    for (k, d) in (2..=9).map(|k| 50.0 * k as f64).enumerate() {
        let sim = estimate(&c, &g, d, &streams, k as u64).d_sensitivity;
        let di = crb_direct_imaging(d, W0, 0.5 * detected, 0.5 * detected, c.t_int).unwrap();
        ok &= sim < di;
        detail += &format!(" {d:.0}:{sim:.1}<{di:.1}");
    }
    check(ok, detail)
}

fn low_flux_campaign() -> Outcome {
    let mut c = ExperimentConfig::low_flux();
    c.detector = Detector::Spad(SpadModel::default());
    c.separations_um = vec![400.0, 500.0, 600.0, 700.0, 800.0, 860.0];
    let records = run_campaign(&c, &SeedStream::new(SEED)).unwrap();
    let mut ok = records.len() == 6;
    let mut detail = String::new();
    for r in &records {
        let z = (r.d_hat - r.d_ref) / r.combined_error(c.repetitions);
        ok &= (r.d_sensitivity / 19.2 - 1.0).abs() < 0.25 && z.abs() < 3.0;
        detail += &format!(" {:.0}: sens {:.2} z {:+.2};", r.d_set, r.d_sensitivity, z);
    }
    check(ok, detail.trim().to_string())
}

fn photon_routing() -> Outcome {
    let n = photons_in_mode(500.0, W0, 3500.0).unwrap();
    check(n == 162, format!("{n} photons in the signal mode"))
}

fn high_flux_shape() -> Outcome {
    let mut c = ExperimentConfig::high_flux();
    let sigma = c.electronic_noise_for(0.020, 120.0).unwrap();
    c.detector = Detector::Photodiode(PhotodiodeModel::with_electronic_noise(sigma));
    c.repetitions = 2000;
    let streams = SeedStream::new(SEED);
    let g = curve(&c, &streams);
    let mut ok = (sigma / HIGH_FLUX_ELECTRONIC_NOISE - 1.0).abs() < 1e-3;
    let mut detail = format!("sigma_e {sigma:.4e}/s;");
    let mut sens = Vec::new();
    for (k, d) in [20.0, 60.0, 120.0, 160.0].into_iter().enumerate() {
        let sim = estimate(&c, &g, d, &streams, k as u64).d_sensitivity;
        let model = spade_sensitivity_model(d, W0, c.detector_flux(), c.t_int, &c.detector).unwrap();
        ok &= (sim / model - 1.0).abs() < 0.1;
        detail += &format!(" {d:.0}: {:.1}/{:.1} nm;", sim * 1e3, model * 1e3);
        sens.push(sim);
    }
    let ratio = sens[0] / sens[2];
    ok &= ratio >= 3.0;
    detail += &format!(" s(20)/s(120) = {ratio:.2}");
    check(ok, detail)
}

fn differential(mismatch: f64) -> DifferentialResult {
    let mut c = ExperimentConfig::high_flux();
    let streams = SeedStream::new(SEED);
    let g = curve(&c, &streams);
    c.waist_mismatch = 1.0 + mismatch;
    differential_measurement(
        &c.scene(120.0).unwrap(),
        &c.instrument().unwrap(),
        &g,
        0.2,
        10,
        &c.estimate_settings(),
        &streams,
    )
    .unwrap()
}

fn differential_steps() -> Outcome {
    let matched = differential(0.0);
    let hats: Vec<f64> = matched.results.iter().map(|r| r.d_hat).collect();
    let pooled = matched.pooled_sensitivity();
    let min_gap = hats
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    let skewed = differential(0.02);
    let f = skewed.fit;
    check(
        matched.fit.r_squared > 0.99
            && min_gap >= 2.0 * pooled
            && f.r_squared > 0.99
            && (f.slope - 1.0).abs() > f.slope_stderr,
        format!(
            "matched R2 {:.5}, slope {:.4}; min step {:.1} nm vs pooled sd {:.1} nm; 2% mismatch slope {:.4} +/- {:.4}, R2 {:.5}",
            matched.fit.r_squared,
            matched.fit.slope,
            min_gap * 1e3,
            pooled * 1e3,
            f.slope,
            f.slope_stderr,
            f.r_squared
        ),
    )
}

fn mismatch_bias() -> Outcome {
    let streams = SeedStream::new(SEED);
    let base = ExperimentConfig::high_flux();
    let g = curve(&base, &streams);
    let mut biases = Vec::new();
    let mut zero_ok = false;
    for eps in [0.0, 0.01, 0.02, 0.04] {
        let mut c = base.clone();
        c.waist_mismatch = 1.0 + eps;
        let est = estimate(&c, &g, 60.0, &streams, 0);
        let bias = (est.d_hat - est.d_ref).abs();
        if eps == 0.0 {
            zero_ok = bias < 3.0 * est.combined_error();
        }
        biases.push(bias);
    }
    let monotone = biases.windows(2).all(|w| w[1] >= w[0]);
    let order = biases[1..].iter().any(|&b| (0.1..=10.0).contains(&b));
    check(
        monotone && zero_ok && order,
        format!(
            "|bias| at eps 0/0.01/0.02/0.04: {:?} um",
            biases.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn incoherence() -> Outcome {
    let a = GaussianBeam::new(-300.0, W0, 0.6).unwrap();
    let b = GaussianBeam::new(300.0, W0, 0.4).unwrap();
    let incoherent = mode_powers(&Scene::incoherent(a, b).unwrap(), &ModeIndex::MEASURED).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let n = 100_000;
    let mut sums = [0.0; 5];
    for _ in 0..n {
        let phi = rng.random_range(-PI..PI);
        let p = mode_powers(&Scene::new(a, b, 1.0, phi).unwrap(), &ModeIndex::MEASURED).unwrap();
        for (s, m) in sums.iter_mut().zip(ModeIndex::MEASURED) {
            *s += p.get(m);
        }
    }
    let worst = sums
        .iter()
        .zip(ModeIndex::MEASURED)
        .map(|(s, m)| (s / n as f64 / incoherent.get(m) - 1.0).abs())
        .fold(0.0, f64::max);
    let sa = GaussianBeam::new(-300.0, W0, 0.5).unwrap();
    let sb = GaussianBeam::new(300.0, W0, 0.5).unwrap();
    let dark = mode_powers(&Scene::new(sa, sb, 1.0, 0.0).unwrap(), &[ModeIndex::SIGNAL])
        .unwrap()
        .get(ModeIndex::SIGNAL);
    check(
        worst < 0.01 && dark.abs() < 1e-15,
        format!("worst phase-average deviation {worst:.2e}, in-phase signal power {dark:.1e}"),
    )
}

fn round_trip() -> Outcome {
    let mut c = ExperimentConfig::high_flux();
    c.detector = Detector::Photodiode(PhotodiodeModel::noiseless());
    c.quadrant = QuadrantDetectorModel::noiseless();
    let g = curve(&c, &SeedStream::new(SEED));
    let inst = c.instrument().unwrap();
    let (lo, hi) = g.monotone_branch();
    let mut worst: f64 = 0.0;
    for k in 1..500 {
        let d = lo + (hi - lo) * k as f64 / 500.0;
        let scene = c.scene(d).unwrap();
        let out = inst.output_fluxes(&scene).unwrap();
        let ratio = inst.expected_window(&out, scene.total_power()).ratio().unwrap();
        worst = worst.max((invert(&g, ratio).unwrap().separation - d).abs());
    }
    check(
        worst < 1e-3,
        format!("branch [0, {hi:.1}] um, worst error {worst:.2e} um"),
    )
}

fn determinism() -> Outcome {
    let c = ExperimentConfig::low_flux();
    let streams = SeedStream::new(SEED);
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| records_to_csv(&run_campaign(&c, &streams).unwrap()).unwrap())
    };
    let one = csv(1);
    let same = [2, 8].iter().all(|&t| csv(t) == one);
    check(same, format!("{} bytes identical under 1, 2 and 8 workers", one.len()))
}

fn main() -> ExitCode {
    let criteria: [Check; 11] = [
        ("quantum bound point values", qcrb_points),
        ("direct-imaging Fisher information", direct_imaging_bound),
        ("crossover below direct imaging", crossover),
        ("low-flux Monte Carlo", low_flux_campaign),
        ("photon routing", photon_routing),
        ("high-flux sensitivity shape", high_flux_shape),
        ("differential measurement", differential_steps),
        ("waist-mismatch bias", mismatch_bias),
        ("incoherent phase average", incoherence),
        ("pipeline round trip", round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
