//! Reference sensitivities: the classical Cramér-Rao bound of ideal direct
//! imaging, the quantum Cramér-Rao bound, and the error-propagation model of
//! a noisy signal-mode measurement.
//!
//! Fluxes are photon fluxes, so the photon energy that converts watts into
//! photons is already absorbed and Fisher information comes out per second.
//! Points where the Fisher information vanishes return `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::instrument::Detector;
use crate::quadrature::{integrate, QuadOptions};
use crate::scene::{i01_analytic, i01_derivative};

/// Integrand values below this fraction of the peak image intensity are dropped.
const INTENSITY_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundKind {
    Qcrb,
    DiCrb,
    SpadeModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub separation: f64,
    /// Standard-deviation bound (µm).
    pub sensitivity: f64,
    /// Fisher information per detected photon (1/µm²).
    pub fisher_per_photon: f64,
    pub photons: f64,
}

fn check_common(d: f64, w0: f64) -> Result<()> {
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::Domain(format!("waist must be positive, got {w0}")));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("separation must be non-negative, got {d}")));
    }
    Ok(())
}

/// Fisher information per unit time on the separation for a noiseless,
/// infinitely fine camera imaging two incoherent Gaussian spots with fluxes
/// `p1` (at `-d/2`) and `p2` (at `+d/2`).
///
/// The `y` integral factors out because both spots share the same profile
/// along `y`; the `x` integral runs over `[-(8 w0 + d), 8 w0 + d]`.
pub fn fisher_direct_imaging(d: f64, w0: f64, p1: f64, p2: f64) -> Result<f64> {
    check_common(d, w0)?;
    if !(p1 >= 0.0 && p2 >= 0.0 && p1 + p2 > 0.0) {
        return Err(Error::Domain(format!(
            "source fluxes must be non-negative with a positive sum, got {p1} and {p2}"
        )));
    }
    let w2 = w0 * w0;
    let norm = (2.0 / std::f64::consts::PI).sqrt() / w0;
    let spot = |z: f64| norm * (-2.0 * z * z / w2).exp();
    let image = |x: f64| p1 * spot(x + 0.5 * d) + p2 * spot(x - 0.5 * d);
    let peak = image(-0.5 * d).max(image(0.5 * d));
    let floor = INTENSITY_FLOOR * peak;

    let integrand = |x: f64| {
        let (za, zb) = (x + 0.5 * d, x - 0.5 * d);
        let (ga, gb) = (spot(za), spot(zb));
        let intensity = p1 * ga + p2 * gb;
        if intensity < floor {
            return 0.0;
        }
        // d/dd of p1 g(x + d/2) + p2 g(x - d/2), with g'(z) = -4 z g(z) / w²
        let slope = 0.5 * p1 * (-4.0 * za / w2) * ga - 0.5 * p2 * (-4.0 * zb / w2) * gb;
        slope * slope / intensity
    };
    let reach = 8.0 * w0 + d;
    let result = integrate(integrand, -reach, reach, QuadOptions::default())
        .map_err(|e| Error::Numerical(format!("direct-imaging Fisher information at d = {d} um: {e}")))?;
    Ok(result.value)
}

/// [`fisher_direct_imaging`] divided by the total flux.
pub fn fisher_direct_imaging_per_photon(d: f64, w0: f64, p1: f64, p2: f64) -> Result<f64> {
    Ok(fisher_direct_imaging(d, w0, p1, p2)? / (p1 + p2))
}

/// `1 / √(F t_int)` for ideal direct imaging; infinite where `F = 0`.
pub fn crb_direct_imaging(d: f64, w0: f64, p1: f64, p2: f64, t_int: f64) -> Result<f64> {
    if !(t_int > 0.0) {
        return Err(Error::Domain(format!("integration time must be positive, got {t_int}")));
    }
    let f = fisher_direct_imaging(d, w0, p1, p2)?;
    Ok(if f > 0.0 {
        1.0 / (f * t_int).sqrt()
    } else {
        f64::INFINITY
    })
}

/// Quantum Cramér-Rao bound `w0 / √N` for `photons` detected photons.
pub fn qcrb(photons: f64, w0: f64) -> Result<f64> {
    if !(photons > 0.0) {
        return Err(Error::Domain(format!("photon number must be positive, got {photons}")));
    }
    if !(w0 > 0.0) {
        return Err(Error::Domain(format!("waist must be positive, got {w0}")));
    }
    Ok(w0 / photons.sqrt())
}

/// Error-propagation sensitivity of an estimator built on the signal-mode
/// power of a symmetric pair, `Δd = √Var(I01) / |∂I01/∂d|`.
///
/// `total_flux` is the flux reaching the detectors summed over all modes,
/// before detector efficiency. The variance is whatever `detector` adds on
/// top of the mean signal flux over one window of length `t_int`.
pub fn spade_sensitivity_model(d: f64, w0: f64, total_flux: f64, t_int: f64, detector: &Detector) -> Result<f64> {
    check_common(d, w0)?;
    if !(d > 0.0) {
        return Err(Error::Domain("error propagation needs a positive separation".into()));
    }
    if !(total_flux > 0.0 && t_int > 0.0) {
        return Err(Error::Domain("flux and integration time must be positive".into()));
    }
    let slope = i01_derivative(d, w0, total_flux)?;
    if slope.abs() < 1e-18 * total_flux / w0 {
        return Ok(f64::INFINITY);
    }
    let variance = detector.flux_variance(i01_analytic(d, w0, total_flux)?, t_int);
    Ok(variance.sqrt() / slope.abs())
}

/// Photons routed to the signal mode, `N (d²/4w0²) e^{-d²/4w0²}`, rounded.
pub fn photons_in_mode(d: f64, w0: f64, photons: f64) -> Result<u64> {
    check_common(d, w0)?;
    Ok(i01_analytic(d, w0, photons)?.round() as u64)
}

/// Electronic noise (photons/s RMS) for which a shot-plus-electronic
/// photodiode reaches `target` sensitivity at separation `d`.
pub fn electronic_noise_for_sensitivity(target: f64, d: f64, w0: f64, total_flux: f64, t_int: f64) -> Result<f64> {
    let slope = i01_derivative(d, w0, total_flux)?;
    let shot = i01_analytic(d, w0, total_flux)? / t_int;
    let needed = (target * slope).powi(2) - shot;
    if !(needed > 0.0) {
        return Err(Error::Domain(format!(
            "target {target} um is below the shot-noise limit at d = {d} um"
        )));
    }
    Ok(needed.sqrt())
}

/// Dark-count rate (counts/s) for which a single-photon detector of
/// efficiency `efficiency` reaches `target` sensitivity at separation `d`.
pub fn dark_rate_for_sensitivity(
    target: f64,
    d: f64,
    w0: f64,
    total_flux: f64,
    t_int: f64,
    efficiency: f64,
) -> Result<f64> {
    let scale = efficiency * t_int;
    let slope_counts = i01_derivative(d, w0, total_flux)? * scale;
    let signal_counts = i01_analytic(d, w0, total_flux)? * scale;
    let dark_counts = (target * slope_counts).powi(2) - signal_counts;
    if !(dark_counts > 0.0) {
        return Err(Error::Domain(format!(
            "target {target} um is below the shot-noise limit at d = {d} um"
        )));
    }
    Ok(dark_counts / t_int)
}

/// Direct-imaging bound for a symmetric equal-flux pair over a list of
/// separations, `photons` detected in total per window.
pub fn direct_imaging_curve(
    separations: &[f64],
    w0: f64,
    photons: f64,
    t_int: f64,
    execution: Execution,
) -> Result<Vec<BoundResult>> {
    let flux = photons / t_int;
    try_map_indexed(separations.len(), execution, |i| {
        let d = separations[i];
        let fisher = fisher_direct_imaging(d, w0, 0.5 * flux, 0.5 * flux)?;
        Ok(BoundResult {
            kind: BoundKind::DiCrb,
            separation: d,
            sensitivity: if fisher > 0.0 {
                1.0 / (fisher * t_int).sqrt()
            } else {
                f64::INFINITY
            },
            fisher_per_photon: fisher / flux,
            photons,
        })
    })
}
