//! Seeded campaigns: calibrate once, then estimate every configured separation.

use serde::{Deserialize, Serialize};

use crate::bounds::{crb_direct_imaging, photons_in_mode, qcrb, spade_sensitivity_model};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution, SeedStream};
use crate::harness::config::ExperimentConfig;
use crate::pipeline::{
    estimate_separation, fit_calibration, run_calibration_scan, symmetrize, CalibrationCurve, EstimationResult,
    TwoSourceCurve,
};

/// One row of campaign output. Lengths in µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub d_set: f64,
    pub d_ref: f64,
    pub d_ref_err: f64,
    pub d_hat: f64,
    pub d_sensitivity: f64,
    pub qcrb: f64,
    pub di_crb: f64,
    pub spade_model: f64,
    pub clamp_fraction: f64,
    pub photons_in_hg01: u64,
}

impl RunRecord {
    /// Standard deviation of `d_hat - d_ref` given the repetitions behind `d_hat`.
    pub fn combined_error(&self, repetitions: usize) -> f64 {
        ((self.d_sensitivity.powi(2) / repetitions as f64) + self.d_ref_err.powi(2)).sqrt()
    }
}

/// Scan the calibration beam over the configured grid and fit the curve.
pub fn calibrate(config: &ExperimentConfig, streams: &SeedStream, execution: Execution) -> Result<CalibrationCurve> {
    let instrument = config.instrument()?;
    let positions = config.calibration.grid.positions()?;
    let scan = run_calibration_scan(
        &instrument,
        &config.calibration_beam()?,
        &positions,
        config.t_int,
        config.calibration.dwell,
        streams,
        execution,
    )?;
    fit_calibration(&scan, config.calibration.degree)
}

/// Two-source curve for the configured power split.
pub fn two_source_curve(config: &ExperimentConfig, curve: &CalibrationCurve) -> Result<TwoSourceCurve> {
    symmetrize(curve, config.power_fraction_plus, 1.0 - config.power_fraction_plus)
}

/// Estimate and bound one separation; `index` keys its random streams.
pub fn run_separation(
    config: &ExperimentConfig,
    curve: &TwoSourceCurve,
    index: usize,
    streams: &SeedStream,
    execution: Execution,
) -> Result<(RunRecord, EstimationResult)> {
    let d = config.separations_um[index];
    let instrument = config.instrument()?;
    let scene = config.scene(d)?;
    let settings = config.estimate_settings();
    let settings = crate::pipeline::EstimateSettings { execution, ..settings };
    let est = estimate_separation(&scene, &instrument, curve, &settings, streams, index as u64)?;

    let w0 = config.waist_um;
    let detected = config.photons / config.t_int;
    let plus = config.power_fraction_plus;
    let record = RunRecord {
        d_set: d,
        d_ref: est.d_ref,
        d_ref_err: est.d_ref_err,
        d_hat: est.d_hat,
        d_sensitivity: est.d_sensitivity,
        qcrb: qcrb(config.photons, w0)?,
        di_crb: crb_direct_imaging(d, w0, plus * detected, (1.0 - plus) * detected, config.t_int)?,
        spade_model: spade_sensitivity_model(d, w0, config.detector_flux(), config.t_int, &config.detector)?,
        clamp_fraction: est.clamp_fraction,
        photons_in_hg01: photons_in_mode(d, w0, config.photons)?,
    };
    Ok((record, est))
}

/// Full campaign with the default execution mode.
pub fn run_campaign(config: &ExperimentConfig, streams: &SeedStream) -> Result<Vec<RunRecord>> {
    run_campaign_with(config, streams, Execution::default())
}

/// Calibrate once, then estimate every separation. Separation `i` draws
/// from streams keyed by `i`, so the output does not depend on scheduling.
pub fn run_campaign_with(
    config: &ExperimentConfig,
    streams: &SeedStream,
    execution: Execution,
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let curve = two_source_curve(config, &calibrate(config, streams, execution)?)?;
    try_map_indexed(config.separations_um.len(), execution, |i| {
        run_separation(config, &curve, i, streams, execution)
            .map(|(record, _)| record)
            .map_err(|e| Error::AtSeparation {
                index: i,
                separation_um: config.separations_um[i],
                source: Box::new(e),
            })
    })
}
