//! Repeated separation estimates and the differential (small-step) protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution, SeedStream, Stream};
use crate::instrument::{mean_and_variance, reference_separation, Instrument};
use crate::pipeline::calibration::{invert, symmetrize_about, Clamp, TwoSourceCurve};
use crate::scene::Scene;

/// Fraction of clamped repetitions above which an estimate is flagged as degraded.
pub const DEGRADED_CLAMP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSettings {
    pub t_int: f64,
    /// Integration windows per estimate.
    pub repetitions: usize,
    /// Quadrant-detector readings per beam for the reference separation.
    pub reference_repetitions: usize,
    pub execution: Execution,
}

impl EstimateSettings {
    pub fn new(t_int: f64) -> Self {
        Self {
            t_int,
            repetitions: 200,
            reference_repetitions: 200,
            execution: Execution::default(),
        }
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// Mean of the per-window estimates (µm).
    pub d_hat: f64,
    /// Standard deviation of the per-window estimates (µm).
    pub d_sensitivity: f64,
    pub d_ref: f64,
    pub d_ref_err: f64,
    pub repetitions: usize,
    pub per_bin_estimates: Vec<f64>,
    /// Share of windows whose ratio fell outside the increasing branch or
    /// whose reference reading was not positive.
    pub clamp_fraction: f64,
    /// Estimate obtained by inverting the mean ratio instead of averaging
    /// per-window inversions.
    pub d_hat_mean_ratio: f64,
    pub degraded: bool,
}

impl EstimationResult {
    /// Standard error of `d_hat`.
    pub fn standard_error(&self) -> f64 {
        self.d_sensitivity / (self.repetitions as f64).sqrt()
    }

    /// Standard deviation of `d_hat - d_ref`.
    pub fn combined_error(&self) -> f64 {
        (self.standard_error().powi(2) + self.d_ref_err.powi(2)).sqrt()
    }
}

/// Estimate the separation of `scene` from `settings.repetitions` windows,
/// inverting each window's normalized signal through `curve`.
///
/// `key` identifies this estimate among others drawn from `streams`;
/// repetition `i` uses the stream `(key, i)`.
pub fn estimate_separation(
    scene: &Scene,
    instrument: &Instrument,
    curve: &TwoSourceCurve,
    settings: &EstimateSettings,
    streams: &SeedStream,
    key: u64,
) -> Result<EstimationResult> {
    instrument.validate()?;
    if settings.repetitions < 2 {
        return Err(Error::config("repetitions", "need at least two windows per estimate"));
    }
    if !(settings.t_int > 0.0) {
        return Err(Error::config("t_int", "must be positive"));
    }
    let outputs = instrument.output_fluxes(scene)?;
    let input_total = scene.total_power();

    let windows = try_map_indexed(settings.repetitions, settings.execution, |i| -> Result<_> {
        let mut rng = streams.rng(Stream::Estimation, &[key, i as u64]);
        let window = instrument.read_window(&outputs, input_total, settings.t_int, &mut rng);
        let ratio = window.ratio();
        let inversion = ratio.map(|r| invert(curve, r)).transpose()?;
        Ok((ratio, inversion))
    })?;

    let mut estimates = Vec::with_capacity(windows.len());
    let mut ratios = Vec::with_capacity(windows.len());
    let mut clamped = 0usize;
    for (ratio, inversion) in windows {
        match (ratio, inversion) {
            (Some(r), Some(inv)) => {
                if inv.clamp != Clamp::None {
                    clamped += 1;
                }
                ratios.push(r);
                estimates.push(inv.separation);
            }
            _ => clamped += 1,
        }
    }
    if estimates.len() < 2 {
        return Err(Error::Numerical(format!(
            "only {} of {} windows had a positive reference reading",
            estimates.len(),
            settings.repetitions
        )));
    }
    let (d_hat, var) = mean_and_variance(&estimates);
    let (mean_ratio, _) = mean_and_variance(&ratios);
    let d_hat_mean_ratio = invert(curve, mean_ratio)?.separation;

    let mut ref_rng = streams.rng(Stream::Reference, &[key]);
    let reference = reference_separation(
        scene,
        &instrument.quadrant,
        settings.reference_repetitions,
        &mut ref_rng,
    )?;

    let clamp_fraction = clamped as f64 / settings.repetitions as f64;
    Ok(EstimationResult {
        d_hat,
        d_sensitivity: var.sqrt(),
        d_ref: reference.d_ref,
        d_ref_err: reference.d_ref_err,
        repetitions: settings.repetitions,
        per_bin_estimates: estimates,
        clamp_fraction,
        d_hat_mean_ratio,
        degraded: clamp_fraction > DEGRADED_CLAMP_FRACTION,
    })
}

/// Ordinary least-squares straight line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Input("line fit needs at least three (x, y) pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Input("line fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: (sse / (n - 2.0) / sxx).sqrt(),
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialResult {
    /// Displacement of beam b at each step (µm).
    pub displacements: Vec<f64>,
    pub results: Vec<EstimationResult>,
    /// Fit of `d_hat` against `d_ref`.
    pub fit: LinearFit,
}

impl DifferentialResult {
    /// RMS of the per-step sensitivities.
    pub fn pooled_sensitivity(&self) -> f64 {
        let n = self.results.len() as f64;
        (self.results.iter().map(|r| r.d_sensitivity.powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Move beam b away from beam a in `n_steps` increments of `step` (µm),
/// estimating the separation at each position, and fit the estimates
/// against the reference separations.
///
/// The pair midpoint moves by half a step each time; it is taken as known
/// and `curve` is re-centred on it before inverting.
pub fn differential_measurement(
    scene: &Scene,
    instrument: &Instrument,
    curve: &TwoSourceCurve,
    step: f64,
    n_steps: usize,
    settings: &EstimateSettings,
    streams: &SeedStream,
) -> Result<DifferentialResult> {
    if n_steps < 3 {
        return Err(Error::config("n_steps", "a line fit needs at least three steps"));
    }
    if !(step.is_finite() && step != 0.0) {
        return Err(Error::config("step", "must be finite and non-zero"));
    }
    let outward = if scene.beam_b.center_x >= scene.beam_a.center_x {
        1.0
    } else {
        -1.0
    };
    let streams = streams.child(Stream::Differential as u64);
    let displacements: Vec<f64> = (0..n_steps).map(|k| outward * k as f64 * step).collect();
    let results = displacements
        .iter()
        .enumerate()
        .map(|(k, &dx)| {
            let mut moved = *scene;
            moved.beam_b.center_x += dx;
            let centred = symmetrize_about(&curve.base, curve.weight_a, curve.weight_b, curve.centre + 0.5 * dx)?;
            estimate_separation(&moved, instrument, &centred, settings, &streams, k as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<f64> = results.iter().map(|r| r.d_ref).collect();
    let hats: Vec<f64> = results.iter().map(|r| r.d_hat).collect();
    let fit = fit_line(&refs, &hats)?;
    Ok(DifferentialResult {
        displacements,
        results,
        fit,
    })
}
