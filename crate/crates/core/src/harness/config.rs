//! Experiment configuration: JSON schema, per-regime defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::electronic_noise_for_sensitivity;
use crate::error::{Error, Result};
use crate::exec::SeedStream;
use crate::instrument::{
    DemuxModel, Detector, Instrument, Normalization, PhotodiodeModel, QuadrantDetectorModel, SpadModel,
    DEFAULT_BASIS_WAIST_UM, DEFAULT_SPAD_EFFICIENCY, DEFAULT_TRANSMISSION,
};
use crate::pipeline::{CalibrationGrid, EstimateSettings};
use crate::scene::{GaussianBeam, ModeIndex, Scene};
use crate::units::{photon_flux_to_watts, watts_to_photon_flux, DEFAULT_WAVELENGTH_UM};

/// Dark-count rate (counts/s) placing the simulated low-flux sensitivity
/// about 20% above the quantum bound at d = 500 µm.
pub const LOW_FLUX_DARK_RATE: f64 = 392.0;
/// Photodiode electronic noise (photons/s RMS per window) for which the
/// high-flux error-propagation model gives 20 nm at d = 120 µm.
pub const HIGH_FLUX_ELECTRONIC_NOISE: f64 = 1.852e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowFlux,
    HighFlux,
}

/// Calibration scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub grid: CalibrationGrid,
    /// Time spent at each grid position (s).
    pub dwell: f64,
    pub degree: usize,
}

/// Fully resolved experiment configuration. Lengths in µm, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub wavelength_um: f64,
    pub waist_um: f64,
    /// Waist mismatch factor of beam b (1 = identical beams).
    pub waist_mismatch: f64,
    /// Share of the total flux carried by the beam at +x.
    pub power_fraction_plus: f64,
    /// Photons detected per window, summed over the demultiplexer outputs.
    pub photons: f64,
    pub separations_um: Vec<f64>,
    pub t_int: f64,
    pub repetitions: usize,
    pub reference_repetitions: usize,
    pub detector: Detector,
    pub normalization: Normalization,
    pub transmission: f64,
    /// Fraction of each mode's power leaking evenly into the other outputs.
    pub crosstalk_leak: f64,
    pub quadrant: QuadrantDetectorModel,
    pub calibration: CalibrationSettings,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub write_svg: bool,
}

/// On-disk form: every field but `regime` may be omitted.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    regime: Option<Regime>,
    wavelength_um: Option<f64>,
    waist_um: Option<f64>,
    waist_mismatch: Option<f64>,
    power_fraction_plus: Option<f64>,
    photons: Option<f64>,
    /// Alternative to `photons`: optical power entering the demultiplexer (W).
    input_power_w: Option<f64>,
    separations_um: Option<Vec<f64>>,
    t_int: Option<f64>,
    repetitions: Option<usize>,
    reference_repetitions: Option<usize>,
    detector: Option<Detector>,
    normalization: Option<Normalization>,
    transmission: Option<f64>,
    crosstalk_leak: Option<f64>,
    quadrant: Option<QuadrantDetectorModel>,
    calibration_grid: Option<CalibrationGrid>,
    calibration_dwell: Option<f64>,
    calibration_degree: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    write_svg: Option<bool>,
}

impl ExperimentConfig {
    pub fn low_flux() -> Self {
        Self {
            regime: Regime::LowFlux,
            wavelength_um: DEFAULT_WAVELENGTH_UM,
            waist_um: DEFAULT_BASIS_WAIST_UM,
            waist_mismatch: 1.0,
            power_fraction_plus: 0.5,
            photons: 3500.0,
            separations_um: vec![400.0, 500.0, 600.0, 700.0, 800.0, 860.0],
            t_int: 0.1,
            repetitions: 200,
            reference_repetitions: 200,
            detector: Detector::Spad(SpadModel {
                quantum_efficiency: DEFAULT_SPAD_EFFICIENCY,
                dark_count_rate: LOW_FLUX_DARK_RATE,
            }),
            normalization: Normalization::Fundamental,
            transmission: DEFAULT_TRANSMISSION,
            crosstalk_leak: 0.0,
            quadrant: QuadrantDetectorModel::default(),
            // separations reach 860 µm; the branch must extend several
            // sensitivities beyond that to keep estimates unclamped
            calibration: CalibrationSettings {
                grid: CalibrationGrid {
                    start: -500.0,
                    stop: 500.0,
                    step: 6.0,
                },
                dwell: 10.0,
                degree: 6,
            },
            seed: None,
            output_dir: None,
            write_svg: false,
        }
    }

    pub fn high_flux() -> Self {
        Self {
            regime: Regime::HighFlux,
            photons: 1e13,
            separations_um: (1..=8).map(|k| 20.0 * k as f64).collect(),
            t_int: 0.005,
            detector: Detector::Photodiode(PhotodiodeModel::with_electronic_noise(HIGH_FLUX_ELECTRONIC_NOISE)),
            normalization: Normalization::External,
            calibration: CalibrationSettings {
                grid: CalibrationGrid::STANDARD,
                dwell: 10.0,
                degree: 6,
            },
            ..Self::low_flux()
        }
    }

    pub fn defaults(regime: Regime) -> Self {
        match regime {
            Regime::LowFlux => Self::low_flux(),
            Regime::HighFlux => Self::high_flux(),
        }
    }

    /// Parse a JSON document, filling omitted fields from the regime defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let regime = file
            .regime
            .ok_or_else(|| Error::config("regime", "required: one of \"low_flux\", \"high_flux\""))?;
        let mut c = Self::defaults(regime);
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = file.$field { c.$field = v; } )* };
        }
        take!(
            wavelength_um,
            waist_um,
            waist_mismatch,
            power_fraction_plus,
            photons,
            separations_um,
            t_int,
            repetitions,
            reference_repetitions,
            detector,
            normalization,
            transmission,
            crosstalk_leak,
            quadrant,
            write_svg
        );
        if let Some(g) = file.calibration_grid {
            c.calibration.grid = g;
        }
        if let Some(d) = file.calibration_dwell {
            c.calibration.dwell = d;
        }
        if let Some(k) = file.calibration_degree {
            c.calibration.degree = k;
        }
        c.seed = file.seed;
        c.output_dir = file.output_dir;
        if let Some(p) = file.input_power_w {
            if file.photons.is_some() {
                return Err(Error::config(
                    "input_power_w",
                    "give either photons or input_power_w, not both",
                ));
            }
            if !(p > 0.0) {
                return Err(Error::config("input_power_w", format!("must be positive, got {p}")));
            }
            c.validate_optics()?;
            let flux = watts_to_photon_flux(p, c.wavelength_um);
            c.photons = flux * c.transmission * c.detector.efficiency() * c.t_int;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate_optics(&self) -> Result<()> {
        positive("wavelength_um", self.wavelength_um)?;
        positive("t_int", self.t_int)?;
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::config(
                "transmission",
                format!("must lie in (0, 1], got {}", self.transmission),
            ));
        }
        self.detector.validate()?;
        if !(self.detector.efficiency() > 0.0) {
            return Err(Error::config("detector", "efficiency must be positive"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_optics()?;
        positive("waist_um", self.waist_um)?;
        positive("waist_mismatch", self.waist_mismatch)?;
        positive("photons", self.photons)?;
        if !(self.power_fraction_plus > 0.0 && self.power_fraction_plus < 1.0) {
            return Err(Error::config(
                "power_fraction_plus",
                format!("must lie in (0, 1), got {}", self.power_fraction_plus),
            ));
        }
        if self.repetitions < 2 {
            return Err(Error::config("repetitions", "need at least two windows"));
        }
        if self.reference_repetitions < 1 {
            return Err(Error::config("reference_repetitions", "must be at least one"));
        }
        if !(0.0..=1.0).contains(&self.crosstalk_leak) {
            return Err(Error::config("crosstalk_leak", "must lie in [0, 1]"));
        }
        self.quadrant.validate()?;
        let cal = &self.calibration;
        let positions = cal.grid.positions()?;
        if !(cal.dwell >= self.t_int) {
            return Err(Error::config("calibration_dwell", "must be at least one window long"));
        }
        if cal.degree < 2 || cal.degree + 1 > positions.len() {
            return Err(Error::config(
                "calibration_degree",
                format!("needs 2 <= degree < {} grid points", positions.len()),
            ));
        }
        if self.separations_um.is_empty() {
            return Err(Error::config("separations_um", "must not be empty"));
        }
        let last = positions[positions.len() - 1];
        let reach = 2.0 * positions[0].abs().min(last.abs());
        for &d in &self.separations_um {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("separations_um", format!("must be positive, got {d}")));
            }
            if d > reach {
                return Err(Error::config(
                    "separations_um",
                    format!("{d} um lies outside the calibrated range (at most {reach} um)"),
                ));
            }
        }
        Ok(())
    }

    /// Streams for the configured seed, or a configuration error if none is set.
    pub fn streams(&self) -> Result<SeedStream> {
        self.seed
            .map(SeedStream::new)
            .ok_or_else(|| Error::config("seed", "required; set it in the file or pass --seed"))
    }

    /// Flux entering the demultiplexer (photons/s).
    pub fn input_flux(&self) -> f64 {
        self.photons / (self.t_int * self.transmission * self.detector.efficiency())
    }

    /// Optical power entering the demultiplexer (W).
    pub fn input_power_w(&self) -> f64 {
        photon_flux_to_watts(self.input_flux(), self.wavelength_um)
    }

    /// Flux reaching the detectors, summed over all outputs (photons/s).
    pub fn detector_flux(&self) -> f64 {
        self.input_flux() * self.transmission
    }

    pub fn instrument(&self) -> Result<Instrument> {
        let mut demux = DemuxModel::ideal(&ModeIndex::MEASURED)
            .with_transmission(self.transmission)
            .with_uniform_leak(self.crosstalk_leak)?;
        demux.intrinsic_waist = self.waist_um;
        let instrument = Instrument {
            demux,
            detector: self.detector,
            normalization: self.normalization,
            quadrant: self.quadrant,
        };
        instrument.validate()?;
        Ok(instrument)
    }

    /// Beam used for the calibration scan: the reference beam at full flux.
    pub fn calibration_beam(&self) -> Result<GaussianBeam> {
        GaussianBeam::new(0.0, self.waist_um, self.input_flux())
    }

    /// Two-beam scene at separation `d`, centred on the optical axis.
    /// Beam a sits at -d/2 with the nominal waist; beam b at +d/2 carries
    /// the waist mismatch.
    pub fn scene(&self, d: f64) -> Result<Scene> {
        let flux = self.input_flux();
        let plus = self.power_fraction_plus * flux;
        let a = GaussianBeam::new(-0.5 * d, self.waist_um, flux - plus)?;
        let b = GaussianBeam::with_mismatch(0.5 * d, self.waist_um, plus, self.waist_mismatch)?;
        Scene::incoherent(a, b)
    }

    pub fn estimate_settings(&self) -> EstimateSettings {
        EstimateSettings {
            reference_repetitions: self.reference_repetitions,
            ..EstimateSettings::new(self.t_int).with_repetitions(self.repetitions)
        }
    }

    /// Photodiode electronic noise giving `target` µm from the error-propagation
    /// model at separation `d`, for this configuration's flux.
    pub fn electronic_noise_for(&self, target: f64, d: f64) -> Result<f64> {
        electronic_noise_for_sensitivity(target, d, self.waist_um, self.detector_flux(), self.t_int)
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

/// Read and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{dark_rate_for_sensitivity, qcrb};

    #[test]
    fn empty_low_flux_defaults() {
        let c = ExperimentConfig::from_json(r#"{"regime": "low_flux"}"#).unwrap();
        assert_eq!(c.waist_um, 1135.0);
        assert_eq!(c.photons, 3500.0);
        assert_eq!(c.t_int, 0.1);
        assert_eq!(c.repetitions, 200);
        assert_eq!(c.seed, None);
        // 3500 counts at 25% efficiency in 0.1 s
        assert!((c.detector_flux() - 140_000.0).abs() < 1e-6);
    }

    #[test]
    fn empty_high_flux_defaults() {
        let c = ExperimentConfig::from_json(r#"{"regime": "high_flux"}"#).unwrap();
        assert_eq!(c.photons, 1e13);
        assert_eq!(c.t_int, 0.005);
        assert_eq!(c.normalization, Normalization::External);
        assert_eq!(c.separations_um.first(), Some(&20.0));
        assert_eq!(c.separations_um.last(), Some(&160.0));
    }

    #[test]
    fn negative_waist_names_field() {
        let err = ExperimentConfig::from_json(r#"{"regime": "low_flux", "waist_um": -3}"#).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("waist"), "{err}");
    }

    #[test]
    fn missing_regime_and_unknown_fields() {
        let err = ExperimentConfig::from_json("{}").unwrap_err();
        assert!(err.to_string().contains("regime"));
        let err = ExperimentConfig::from_json(r#"{"regime": "low_flux", "wasit_um": 3}"#).unwrap_err();
        assert!(err.to_string().contains("wasit_um"));
    }

    #[test]
    fn seed_is_required_to_run() {
        let c = ExperimentConfig::low_flux();
        assert!(c.streams().unwrap_err().to_string().contains("seed"));
        let c = ExperimentConfig::from_json(r#"{"regime": "low_flux", "seed": 9}"#).unwrap();
        assert_eq!(c.streams().unwrap().seed(), 9);
    }

    #[test]
    fn separation_beyond_calibration_rejected() {
        let err = ExperimentConfig::from_json(r#"{"regime": "high_flux", "separations_um": [300]}"#).unwrap_err();
        assert!(err.to_string().contains("separations_um"));
    }

    #[test]
    fn power_and_photons_agree() {
        let c = ExperimentConfig::high_flux();
        let p = c.input_power_w();
        let text = format!(r#"{{"regime": "high_flux", "input_power_w": {p:e}}}"#);
        let d = ExperimentConfig::from_json(&text).unwrap();
        assert!((d.photons / 1e13 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frozen_noise_constants_match_their_targets() {
        let c = ExperimentConfig::high_flux();
        let sigma = c.electronic_noise_for(0.020, 120.0).unwrap();
        assert!((sigma / HIGH_FLUX_ELECTRONIC_NOISE - 1.0).abs() < 1e-3, "{sigma}");

        let l = ExperimentConfig::low_flux();
        let target = 1.2 * qcrb(l.photons, l.waist_um).unwrap();
        let dark = dark_rate_for_sensitivity(target, 500.0, l.waist_um, l.detector_flux(), l.t_int, 0.25).unwrap();
        assert!((dark / LOW_FLUX_DARK_RATE - 1.0).abs() < 5e-3, "{dark}");
    }
}
