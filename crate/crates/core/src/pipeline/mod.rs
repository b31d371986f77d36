//! Measurement protocol: single-source calibration, polynomial fit,
//! two-source curve, per-window inversion and repetition statistics.

pub mod calibration;
pub mod estimation;

pub use calibration::{
    fit_calibration, invert, run_calibration_scan, symmetrize, symmetrize_about, CalibrationCurve, CalibrationGrid,
    CalibrationScan, Clamp, Inversion, TwoSourceCurve,
};
pub use estimation::{
    differential_measurement, estimate_separation, fit_line, DifferentialResult, EstimateSettings, EstimationResult,
    LinearFit,
};
