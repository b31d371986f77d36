//! Unit conventions.
//!
//! Lengths are micrometres, times are seconds and optical powers are photon
//! fluxes (photons/s). Watts appear only at the configuration boundary and
//! are converted through the photon energy at the configured wavelength.

/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Telecom wavelength of the source laser, in micrometres.
pub const DEFAULT_WAVELENGTH_UM: f64 = 1.55;

/// Photon energy `h c / lambda` in joules for a wavelength given in micrometres.
pub fn photon_energy_j(wavelength_um: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (wavelength_um * 1e-6)
}

pub fn watts_to_photon_flux(power_w: f64, wavelength_um: f64) -> f64 {
    power_w / photon_energy_j(wavelength_um)
}

pub fn photon_flux_to_watts(flux: f64, wavelength_um: f64) -> f64 {
    flux * photon_energy_j(wavelength_um)
}
