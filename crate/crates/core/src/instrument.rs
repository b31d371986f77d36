//! Stochastic instrument models: demultiplexer loss and crosstalk, photodiode
//! and single-photon detector readout, and the quadrant-detector position
//! reference.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};
use crate::scene::{mode_powers, GaussianBeam, ModalPowers, ModeIndex, Scene};

/// Fraction of input power surviving the demultiplexer (-3.9 dB).
pub const DEFAULT_TRANSMISSION: f64 = 0.41;
/// Demultiplexer basis waist referred to the collimator image plane (µm).
pub const DEFAULT_BASIS_WAIST_UM: f64 = 1135.0;
/// Single-photon detector quantum efficiency.
pub const DEFAULT_SPAD_EFFICIENCY: f64 = 0.25;
/// Quadrant-detector single-shot position noise (µm).
pub const DEFAULT_QD_NOISE_UM: f64 = 0.035;

/// Mode demultiplexer: per-mode transmission and a crosstalk matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemuxModel {
    pub modes: Vec<ModeIndex>,
    /// `crosstalk[k][m]` is the fraction of mode `m`'s power that reaches output `k`.
    pub crosstalk: Vec<Vec<f64>>,
    pub transmission: f64,
    pub intrinsic_waist: f64,
}

impl DemuxModel {
    /// Identity crosstalk over `modes` with the default loss.
    pub fn ideal(modes: &[ModeIndex]) -> Self {
        let k = modes.len();
        let crosstalk = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            modes: modes.to_vec(),
            crosstalk,
            transmission: DEFAULT_TRANSMISSION,
            intrinsic_waist: DEFAULT_BASIS_WAIST_UM,
        }
    }

    /// Each mode keeps `1 - leak` and spreads `leak` evenly over the other outputs.
    pub fn with_uniform_leak(mut self, leak: f64) -> Result<Self> {
        let k = self.modes.len();
        if !(0.0..=1.0).contains(&leak) {
            return Err(Error::config("demux.leak", format!("must lie in [0, 1], got {leak}")));
        }
        if k < 2 {
            return Ok(self);
        }
        let off = leak / (k - 1) as f64;
        for (i, row) in self.crosstalk.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = if i == j { 1.0 - leak } else { off };
            }
        }
        Ok(self)
    }

    pub fn with_transmission(mut self, transmission: f64) -> Self {
        self.transmission = transmission;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.modes.len();
        if k == 0 {
            return Err(Error::config("demux.modes", "must not be empty"));
        }
        if self.crosstalk.len() != k || self.crosstalk.iter().any(|r| r.len() != k) {
            return Err(Error::config(
                "demux.crosstalk",
                format!("must be a {k}x{k} matrix matching the mode list"),
            ));
        }
        if self.crosstalk.iter().flatten().any(|&x| !(x >= 0.0)) {
            return Err(Error::config("demux.crosstalk", "entries must be non-negative"));
        }
        for j in 0..k {
            let col: f64 = self.crosstalk.iter().map(|r| r[j]).sum();
            if col > 1.0 + 1e-12 {
                return Err(Error::config(
                    "demux.crosstalk",
                    format!("column {j} sums to {col} > 1"),
                ));
            }
        }
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::config(
                "demux.transmission",
                format!("must lie in (0, 1], got {}", self.transmission),
            ));
        }
        if !(self.intrinsic_waist > 0.0) {
            return Err(Error::config("demux.intrinsic_waist", "must be positive"));
        }
        Ok(())
    }
}

/// Route modal input powers to the demultiplexer outputs:
/// `out_k = T Σ_m X[k][m] in_m`.
pub fn demux(input: &ModalPowers, model: &DemuxModel) -> Result<ModalPowers> {
    model.validate()?;
    if let Some((mode, _)) = input.iter().find(|(m, _)| !model.modes.contains(m)) {
        return Err(Error::config(
            "demux.modes",
            format!("input mode {mode} is not an output of the demultiplexer"),
        ));
    }
    let column: Vec<f64> = model.modes.iter().map(|&m| input.get(m)).collect();
    Ok(model
        .modes
        .iter()
        .zip(&model.crosstalk)
        .map(|(&k, row)| {
            let mixed: f64 = row.iter().zip(&column).map(|(x, p)| x * p).sum();
            (k, model.transmission * mixed)
        })
        .collect())
}

/// Analog photodiode with noise quoted in photon-flux-equivalent units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotodiodeModel {
    /// RMS electronic noise of one integration window (photons/s).
    pub electronic_noise_std: f64,
    /// RMS offset fluctuation per window (photons/s).
    #[serde(default)]
    pub offset_drift_std: f64,
    #[serde(default = "default_true")]
    pub include_shot_noise: bool,
}

fn default_true() -> bool {
    true
}

impl PhotodiodeModel {
    pub fn noiseless() -> Self {
        Self {
            electronic_noise_std: 0.0,
            offset_drift_std: 0.0,
            include_shot_noise: false,
        }
    }

    pub fn shot_limited() -> Self {
        Self {
            include_shot_noise: true,
            ..Self::noiseless()
        }
    }

    pub fn with_electronic_noise(electronic_noise_std: f64) -> Self {
        Self {
            electronic_noise_std,
            ..Self::shot_limited()
        }
    }

    /// Variance of the flux reading over one window, excluding shot noise.
    pub fn detection_variance(&self) -> f64 {
        self.electronic_noise_std.powi(2) + self.offset_drift_std.powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.electronic_noise_std >= 0.0 && self.offset_drift_std >= 0.0) {
            return Err(Error::config("photodiode", "noise levels must be non-negative"));
        }
        Ok(())
    }
}

/// One photodiode reading of `flux` averaged over `t_int`, in photons/s.
/// Raw readings can be negative.
pub fn read_photodiode<R: Rng + ?Sized>(flux: f64, t_int: f64, model: &PhotodiodeModel, rng: &mut R) -> f64 {
    let mut reading = flux;
    if model.include_shot_noise && flux > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        reading += z * (flux / t_int).sqrt();
    }
    if model.electronic_noise_std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        reading += z * model.electronic_noise_std;
    }
    if model.offset_drift_std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        reading += z * model.offset_drift_std;
    }
    reading
}

/// Single-photon avalanche photodiode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadModel {
    pub quantum_efficiency: f64,
    /// Dark counts per second.
    pub dark_count_rate: f64,
}

impl Default for SpadModel {
    fn default() -> Self {
        Self {
            quantum_efficiency: DEFAULT_SPAD_EFFICIENCY,
            dark_count_rate: 0.0,
        }
    }
}

impl SpadModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::config(
                "spad.quantum_efficiency",
                format!("must lie in [0, 1], got {}", self.quantum_efficiency),
            ));
        }
        if !(self.dark_count_rate >= 0.0) {
            return Err(Error::config("spad.dark_count_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// Draw a Poisson variate; zero mean yields zero.
pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite Poisson mean");
    dist.sample(rng) as u64
}

/// Counts registered over `t_int`: Poisson with mean `η flux t + dark t`.
pub fn read_spad<R: Rng + ?Sized>(flux: f64, t_int: f64, model: &SpadModel, rng: &mut R) -> u64 {
    let mean = model.quantum_efficiency * flux * t_int + model.dark_count_rate * t_int;
    poisson(mean, rng)
}

/// Detector placed on every demultiplexer output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    Photodiode(PhotodiodeModel),
    Spad(SpadModel),
}

impl Detector {
    /// Fraction of incident photons converted into signal.
    pub fn efficiency(&self) -> f64 {
        match self {
            Detector::Photodiode(_) => 1.0,
            Detector::Spad(s) => s.quantum_efficiency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Detector::Photodiode(p) => p.validate(),
            Detector::Spad(s) => s.validate(),
        }
    }

    /// Reading converted to an unbiased estimate of the incident flux
    /// (photons/s). Single-photon counts are dark-subtracted and divided by
    /// `η t_int`.
    pub fn read_flux<R: Rng + ?Sized>(&self, flux: f64, t_int: f64, rng: &mut R) -> f64 {
        match self {
            Detector::Photodiode(p) => read_photodiode(flux, t_int, p, rng),
            Detector::Spad(s) => {
                let counts = read_spad(flux, t_int, s, rng) as f64;
                (counts - s.dark_count_rate * t_int) / (s.quantum_efficiency * t_int)
            }
        }
    }

    /// Variance of [`Detector::read_flux`] for incident `flux` over `t_int`.
    pub fn flux_variance(&self, flux: f64, t_int: f64) -> f64 {
        match self {
            Detector::Photodiode(p) => {
                let shot = if p.include_shot_noise { flux / t_int } else { 0.0 };
                shot + p.detection_variance()
            }
            Detector::Spad(s) => {
                let counts = s.quantum_efficiency * flux * t_int + s.dark_count_rate * t_int;
                counts / (s.quantum_efficiency * t_int).powi(2)
            }
        }
    }
}

/// Power reference used to normalize the signal-mode reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Total incident flux from an external pick-off photodiode, taken as exact.
    External,
    /// The fundamental-mode output, read by the same detector type.
    Fundamental,
}

/// Quadrant detector used as the position reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantDetectorModel {
    /// Waist of the beam on the quadrant detector (µm); `None` uses the
    /// beam's own physical waist.
    #[serde(default)]
    pub beam_waist_at_qd: Option<f64>,
    /// Single-shot position noise (µm).
    pub position_noise_std: f64,
}

impl Default for QuadrantDetectorModel {
    fn default() -> Self {
        Self {
            beam_waist_at_qd: None,
            position_noise_std: DEFAULT_QD_NOISE_UM,
        }
    }
}

impl QuadrantDetectorModel {
    pub fn noiseless() -> Self {
        Self {
            position_noise_std: 0.0,
            ..Self::default()
        }
    }

    fn waist_for(&self, beam: &GaussianBeam) -> f64 {
        self.beam_waist_at_qd.unwrap_or_else(|| beam.actual_waist())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.beam_waist_at_qd {
            if !(w > 0.0) {
                return Err(Error::config("quadrant.beam_waist_at_qd", "must be positive"));
            }
        }
        if !(self.position_noise_std >= 0.0) {
            return Err(Error::config("quadrant.position_noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

/// Normalized half-plane difference signal `erf(√2 b / w)` of one beam.
pub fn difference_signal(beam: &GaussianBeam, model: &QuadrantDetectorModel) -> f64 {
    erf(std::f64::consts::SQRT_2 * beam.center_x / model.waist_for(beam))
}

/// Power-weighted difference signal with both beams on. Symmetric equal-power
/// pairs give exactly zero whatever their separation.
pub fn combined_difference_signal(scene: &Scene, model: &QuadrantDetectorModel) -> f64 {
    let (pa, pb) = (scene.beam_a.power, scene.beam_b.power);
    if pa + pb == 0.0 {
        return 0.0;
    }
    (pa * difference_signal(&scene.beam_a, model) + pb * difference_signal(&scene.beam_b, model)) / (pa + pb)
}

/// Position of a single beam recovered from the quadrant difference signal.
pub fn quadrant_position<R: Rng + ?Sized>(
    beam: &GaussianBeam,
    model: &QuadrantDetectorModel,
    rng: &mut R,
) -> Result<f64> {
    let w = model.waist_for(beam);
    let s = difference_signal(beam, model);
    if !(s.abs() < 1.0) {
        return Err(Error::Saturation { signal: s });
    }
    let mut x = w / std::f64::consts::SQRT_2 * erf_inv(s);
    if model.position_noise_std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        x += z * model.position_noise_std;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSeparation {
    pub d_ref: f64,
    pub d_ref_err: f64,
}

/// Reference separation from `repetitions` position readings of each beam
/// taken with the other beam off.
pub fn reference_separation<R: Rng + ?Sized>(
    scene: &Scene,
    model: &QuadrantDetectorModel,
    repetitions: usize,
    rng: &mut R,
) -> Result<ReferenceSeparation> {
    if !(scene.beam_a.power > 0.0 && scene.beam_b.power > 0.0) {
        return Err(Error::Input(
            "both beams need positive power for a reference measurement".into(),
        ));
    }
    if repetitions == 0 {
        return Err(Error::Input("reference needs at least one repetition".into()));
    }
    let mut stats = |beam: &GaussianBeam| -> Result<(f64, f64)> {
        let xs = (0..repetitions)
            .map(|_| quadrant_position(beam, model, rng))
            .collect::<Result<Vec<_>>>()?;
        let (mean, var) = mean_and_variance(&xs);
        Ok((mean, var / repetitions as f64))
    };
    let (x1, v1) = stats(&scene.beam_a)?;
    let (x2, v2) = stats(&scene.beam_b)?;
    Ok(ReferenceSeparation {
        d_ref: (x1 - x2).abs(),
        d_ref_err: (v1 + v2).sqrt(),
    })
}

/// Sample mean and unbiased sample variance (0 for fewer than two samples).
pub(crate) fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Complete instrument: demultiplexer, output detectors, normalization and
/// position reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub demux: DemuxModel,
    pub detector: Detector,
    pub normalization: Normalization,
    pub quadrant: QuadrantDetectorModel,
}

/// Raw readings of one integration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub signal: f64,
    pub reference: f64,
}

impl Window {
    /// Normalized signal, or `None` when the reference is not positive.
    pub fn ratio(&self) -> Option<f64> {
        (self.reference > 0.0).then(|| self.signal / self.reference)
    }
}

impl Instrument {
    pub fn validate(&self) -> Result<()> {
        self.demux.validate()?;
        self.detector.validate()?;
        self.quadrant.validate()?;
        if !self.demux.modes.contains(&ModeIndex::SIGNAL) {
            return Err(Error::config("demux.modes", "must include the signal mode (n=1, m=0)"));
        }
        if self.normalization == Normalization::Fundamental && !self.demux.modes.contains(&ModeIndex::FUNDAMENTAL) {
            return Err(Error::config(
                "demux.modes",
                "fundamental-mode normalization needs the (0, 0) output",
            ));
        }
        Ok(())
    }

    /// Mean flux at every demultiplexer output for `scene`.
    pub fn output_fluxes(&self, scene: &Scene) -> Result<ModalPowers> {
        let input = mode_powers(scene, &self.demux.modes)?;
        demux(&input, &self.demux)
    }

    /// Mean (signal, reference) pair, i.e. a noiseless window.
    pub fn expected_window(&self, outputs: &ModalPowers, input_total: f64) -> Window {
        Window {
            signal: outputs.get(ModeIndex::SIGNAL),
            reference: match self.normalization {
                Normalization::External => input_total,
                Normalization::Fundamental => outputs.get(ModeIndex::FUNDAMENTAL),
            },
        }
    }

    /// Simulate one integration window.
    pub fn read_window<R: Rng + ?Sized>(
        &self,
        outputs: &ModalPowers,
        input_total: f64,
        t_int: f64,
        rng: &mut R,
    ) -> Window {
        let signal = self.detector.read_flux(outputs.get(ModeIndex::SIGNAL), t_int, rng);
        let reference = match self.normalization {
            Normalization::External => input_total,
            Normalization::Fundamental => self.detector.read_flux(outputs.get(ModeIndex::FUNDAMENTAL), t_int, rng),
        };
        Window { signal, reference }
    }
}
