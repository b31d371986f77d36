//! Analytic optical model of two Gaussian source images and their projection
//! onto the Hermite-Gauss basis of a mode demultiplexer.
//!
//! Conventions:
//! - The separation axis is `x`. [`ModeIndex::n`] is the order along `x` and
//!   [`ModeIndex::m`] the order along `y`. The mode the laboratory labels
//!   "HG01" (first order along the displacement) is `ModeIndex { n: 1, m: 0 }`,
//!   exposed as [`ModeIndex::SIGNAL`].
//! - Waists are intensity `1/e^2` radii: `|u(x, y)|^2 ∝ exp(-2 (x^2 + y^2) / w^2)`.
//! - A beam displaced by `b` from the basis centre couples to the order-`n`
//!   mode of a matched basis with amplitude `β^n e^{-β²/2} / √n!`, `β = b / w`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Hermite-Gauss mode label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    /// Order along the separation axis.
    pub n: u32,
    /// Order along the orthogonal axis.
    pub m: u32,
}

impl ModeIndex {
    pub const fn new(n: u32, m: u32) -> Self {
        Self { n, m }
    }

    pub const FUNDAMENTAL: ModeIndex = ModeIndex::new(0, 0);
    /// First order along the separation axis; carries the separation signal.
    pub const SIGNAL: ModeIndex = ModeIndex::new(1, 0);

    /// The five demultiplexer outputs used for alignment and estimation.
    pub const MEASURED: [ModeIndex; 5] = [
        ModeIndex::new(0, 0),
        ModeIndex::new(1, 0),
        ModeIndex::new(0, 1),
        ModeIndex::new(2, 0),
        ModeIndex::new(0, 2),
    ];
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HG[n={},m={}]", self.n, self.m)
    }
}

/// Image of one source: a circular Gaussian beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    /// Transverse position along the separation axis (µm).
    pub center_x: f64,
    /// Nominal waist (µm); the demultiplexer basis is matched to it.
    pub waist: f64,
    /// Photon flux (photons/s).
    pub power: f64,
    /// Factor applied to `waist` to get the real beam waist (1.0 = matched).
    pub waist_mismatch: f64,
}

impl GaussianBeam {
    pub fn new(center_x: f64, waist: f64, power: f64) -> Result<Self> {
        Self::with_mismatch(center_x, waist, power, 1.0)
    }

    pub fn with_mismatch(center_x: f64, waist: f64, power: f64, waist_mismatch: f64) -> Result<Self> {
        let beam = Self {
            center_x,
            waist,
            power,
            waist_mismatch,
        };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0 && self.waist.is_finite()) {
            return Err(Error::Domain(format!("waist must be positive, got {}", self.waist)));
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::Domain(format!("power must be non-negative, got {}", self.power)));
        }
        if !(self.waist_mismatch > 0.0 && self.waist_mismatch.is_finite()) {
            return Err(Error::Domain(format!(
                "waist mismatch must be positive, got {}",
                self.waist_mismatch
            )));
        }
        if !self.center_x.is_finite() {
            return Err(Error::Domain("beam position must be finite".into()));
        }
        Ok(())
    }

    /// Physical waist, `waist * waist_mismatch`.
    pub fn actual_waist(&self) -> f64 {
        self.waist * self.waist_mismatch
    }

    pub fn displaced_to(self, center_x: f64) -> Self {
        Self { center_x, ..self }
    }

    pub fn with_power(self, power: f64) -> Self {
        Self { power, ..self }
    }

    /// Field amplitude overlap with mode `mode` of a basis of waist `basis_waist`
    /// centred on the instrument axis.
    pub fn mode_amplitude(&self, mode: ModeIndex, basis_waist: f64) -> Result<f64> {
        let along = overlap_amplitude(self.center_x, self.actual_waist(), basis_waist, mode.n)?;
        if along == 0.0 {
            return Ok(0.0);
        }
        let across = overlap_amplitude(0.0, self.actual_waist(), basis_waist, mode.m)?;
        Ok(along * across)
    }
}

/// Two source images plus their mutual coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub beam_a: GaussianBeam,
    pub beam_b: GaussianBeam,
    /// Degree of mutual coherence, 0 = fully incoherent.
    pub coherence: f64,
    /// Relative phase of beam b (radians); only used when `coherence > 0`.
    pub relative_phase: f64,
}

impl Scene {
    pub fn incoherent(beam_a: GaussianBeam, beam_b: GaussianBeam) -> Result<Self> {
        Self::new(beam_a, beam_b, 0.0, 0.0)
    }

    pub fn new(beam_a: GaussianBeam, beam_b: GaussianBeam, coherence: f64, relative_phase: f64) -> Result<Self> {
        let scene = Self {
            beam_a,
            beam_b,
            coherence,
            relative_phase,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Incoherent pair of identical matched beams at `±d/2`, each with half of `total_power`.
    pub fn symmetric(separation: f64, waist: f64, total_power: f64) -> Result<Self> {
        let half = 0.5 * total_power;
        Self::incoherent(
            GaussianBeam::new(-0.5 * separation, waist, half)?,
            GaussianBeam::new(0.5 * separation, waist, half)?,
        )
    }

    /// One beam alone; the second slot carries zero power.
    pub fn single(beam: GaussianBeam) -> Result<Self> {
        Self::incoherent(beam, beam.with_power(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.beam_a.validate()?;
        self.beam_b.validate()?;
        if !(0.0..=1.0).contains(&self.coherence) {
            return Err(Error::Domain(format!(
                "coherence must lie in [0, 1], got {}",
                self.coherence
            )));
        }
        if !self.relative_phase.is_finite() {
            return Err(Error::Domain("relative phase must be finite".into()));
        }
        Ok(())
    }

    pub fn separation(&self) -> f64 {
        (self.beam_a.center_x - self.beam_b.center_x).abs()
    }

    pub fn total_power(&self) -> f64 {
        self.beam_a.power + self.beam_b.power
    }

    /// Waist of the demultiplexer basis, matched to beam a's nominal waist.
    pub fn basis_waist(&self) -> f64 {
        self.beam_a.waist
    }
}

/// Optical power per Hermite-Gauss mode (photons/s).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalPowers {
    pub entries: BTreeMap<ModeIndex, f64>,
}

impl ModalPowers {
    pub fn get(&self, mode: ModeIndex) -> f64 {
        self.entries.get(&mode).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }
}

impl FromIterator<(ModeIndex, f64)> for ModalPowers {
    fn from_iter<I: IntoIterator<Item = (ModeIndex, f64)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Amplitude with which a matched Gaussian displaced by `displacement` excites
/// the order-`order_n` Hermite-Gauss mode: `β^n e^{-β²/2} / √n!`, `β = displacement / waist`.
pub fn coupling_amplitude(displacement: f64, waist: f64, order_n: u32) -> Result<f64> {
    if !(waist > 0.0 && waist.is_finite()) {
        return Err(Error::Domain(format!("waist must be positive, got {waist}")));
    }
    let beta = displacement / waist;
    if beta == 0.0 {
        return Ok(if order_n == 0 { 1.0 } else { 0.0 });
    }
    let n = order_n as f64;
    let magnitude = (n * beta.abs().ln() - 0.5 * beta * beta - 0.5 * ln_factorial(order_n)).exp();
    let negative = beta < 0.0 && order_n % 2 == 1;
    Ok(if negative { -magnitude } else { magnitude })
}

/// Normalized 1-D Hermite-Gauss amplitude `u_n(x)` of waist `waist`.
pub fn hermite_gauss_1d(x: f64, waist: f64, order_n: u32) -> f64 {
    // Hermite functions in z = √2 x / w via the stable three-term recurrence.
    let z = std::f64::consts::SQRT_2 * x / waist;
    let jacobian = (2.0 / (waist * waist)).sqrt().sqrt();
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * z * z).exp();
    for k in 0..order_n {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * z * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur * jacobian
}

/// Overlap `⟨u_n | g⟩` between the order-`n` mode of a basis of waist `mode_waist`
/// and a normalized Gaussian of waist `beam_waist` displaced by `displacement`.
///
/// Uses the closed form when the waists match, adaptive quadrature otherwise.
pub fn overlap_amplitude(displacement: f64, beam_waist: f64, mode_waist: f64, order_n: u32) -> Result<f64> {
    if !(beam_waist > 0.0 && mode_waist > 0.0) {
        return Err(Error::Domain(format!(
            "waists must be positive, got beam {beam_waist} and mode {mode_waist}"
        )));
    }
    if (beam_waist / mode_waist - 1.0).abs() < 1e-14 {
        return coupling_amplitude(displacement, mode_waist, order_n);
    }
    // centred beams have no odd-order content
    if displacement == 0.0 && order_n % 2 == 1 {
        return Ok(0.0);
    }
    let norm = (2.0 / (PI * beam_waist * beam_waist)).sqrt().sqrt();
    let integrand = |x: f64| {
        let dx = x - displacement;
        hermite_gauss_1d(x, mode_waist, order_n) * norm * (-dx * dx / (beam_waist * beam_waist)).exp()
    };
    let w2 = mode_waist * mode_waist;
    let b2 = beam_waist * beam_waist;
    let center = displacement * w2 / (w2 + b2);
    let reach = 12.0 * mode_waist.max(beam_waist) + 2.0 * (order_n as f64).sqrt() * mode_waist;
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        max_intervals: 4096,
    };
    Ok(integrate(integrand, center - reach, center + reach, opts)?.value)
}

/// Power carried by each requested mode.
///
/// Incoherent scenes add the two beams' modal powers; fully coherent scenes add
/// amplitudes with the relative phase; partial coherence blends the two
/// linearly in intensity.
pub fn mode_powers(scene: &Scene, modes: &[ModeIndex]) -> Result<ModalPowers> {
    if modes.is_empty() {
        return Err(Error::Input("mode set must not be empty".into()));
    }
    scene.validate()?;
    let basis = scene.basis_waist();
    let (pa, pb) = (scene.beam_a.power, scene.beam_b.power);
    let mut out = ModalPowers::default();
    for &mode in modes {
        let ca = scene.beam_a.mode_amplitude(mode, basis)?;
        let cb = scene.beam_b.mode_amplitude(mode, basis)?;
        let incoherent = pa * ca * ca + pb * cb * cb;
        let power = if scene.coherence > 0.0 {
            let cross = 2.0 * (pa * pb).sqrt() * ca * cb * scene.relative_phase.cos();
            let coherent = (incoherent + cross).max(0.0);
            scene.coherence * coherent + (1.0 - scene.coherence) * incoherent
        } else {
            incoherent
        };
        out.entries.insert(mode, power);
    }
    Ok(out)
}

/// Normalized Gaussian intensity profile, `∬ u² dx dy = 1`.
fn gaussian_intensity(x: f64, y: f64, waist: f64) -> f64 {
    2.0 / (PI * waist * waist) * (-2.0 * (x * x + y * y) / (waist * waist)).exp()
}

/// Image-plane intensity of an incoherent scene (photons/s/µm²).
pub fn intensity_profile(scene: &Scene, x: f64, y: f64) -> Result<f64> {
    if scene.coherence > 0.0 {
        return Err(Error::Unsupported(format!(
            "intensity profile is defined for incoherent scenes only (coherence = {})",
            scene.coherence
        )));
    }
    let a = &scene.beam_a;
    let b = &scene.beam_b;
    Ok(a.power * gaussian_intensity(x - a.center_x, y, a.actual_waist())
        + b.power * gaussian_intensity(x - b.center_x, y, b.actual_waist()))
}

/// Closed-form signal-mode power of a symmetric incoherent pair:
/// `P (d²/4w²) e^{-d²/4w²}`.
pub fn i01_analytic(separation: f64, waist: f64, total_power: f64) -> Result<f64> {
    check_i01_domain(separation, waist)?;
    let q = separation * separation / (4.0 * waist * waist);
    Ok(total_power * q * (-q).exp())
}

/// `∂/∂d` of [`i01_analytic`].
pub fn i01_derivative(separation: f64, waist: f64, total_power: f64) -> Result<f64> {
    check_i01_domain(separation, waist)?;
    let q = separation * separation / (4.0 * waist * waist);
    Ok(total_power * (-q).exp() * (1.0 - q) * separation / (2.0 * waist * waist))
}

fn check_i01_domain(separation: f64, waist: f64) -> Result<()> {
    if !(waist > 0.0) {
        return Err(Error::Domain(format!("waist must be positive, got {waist}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::Domain(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    Ok(())
}
