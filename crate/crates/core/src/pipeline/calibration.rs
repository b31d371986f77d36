//! Single-source calibration scan, polynomial calibration curve, the derived
//! two-source curve and its inversion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution, SeedStream, Stream};
use crate::instrument::{mean_and_variance, Instrument};
use crate::scene::{GaussianBeam, Scene};

/// Condition number of the scaled Vandermonde matrix above which a fit is refused.
const MAX_CONDITION: f64 = 1e12;
/// Samples used to locate the first stationary point of a two-source curve.
const TURN_SEARCH_SAMPLES: usize = 4000;
/// Bisection stops once the bracket is narrower than this (µm).
const INVERT_TOLERANCE_UM: f64 = 1e-6;

/// Evenly spaced stage positions `start, start + step, ...` not exceeding `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl CalibrationGrid {
    /// Stage scan from -100 µm to +100 µm in 6 µm steps.
    pub const STANDARD: CalibrationGrid = CalibrationGrid {
        start: -100.0,
        stop: 100.0,
        step: 6.0,
    };

    pub fn positions(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.stop > self.start) {
            return Err(Error::config(
                "calibration.grid",
                format!("needs step > 0 and stop > start, got {self:?}"),
            ));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

/// Mean normalized signal-mode power at each calibration position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScan {
    pub positions: Vec<f64>,
    pub normalized_powers: Vec<f64>,
    /// Standard error of each point, from the spread of per-window ratios.
    pub standard_errors: Vec<f64>,
    pub repetitions_per_point: usize,
    /// Positions dropped because the reference reading was not positive.
    #[serde(default)]
    pub excluded: Vec<f64>,
}

impl CalibrationScan {
    /// Build a scan from known values, e.g. to fit an analytic curve.
    pub fn from_points(positions: Vec<f64>, normalized_powers: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        let scan = Self {
            positions,
            normalized_powers,
            standard_errors: vec![0.0; n],
            repetitions_per_point: 1,
            excluded: Vec::new(),
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.normalized_powers.len() {
            return Err(Error::Input("scan positions and values differ in length".into()));
        }
        if self.positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("scan positions must be strictly increasing".into()));
        }
        if self.normalized_powers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("scan values must be finite".into()));
        }
        Ok(())
    }
}

/// Scan a single beam across `positions`, dwelling `dwell` seconds per point
/// in windows of `t_int`.
///
/// Each point reports the mean signal over the dwell divided by the mean
/// reference. Point `i` draws from its own keyed stream.
pub fn run_calibration_scan(
    instrument: &Instrument,
    beam: &GaussianBeam,
    positions: &[f64],
    t_int: f64,
    dwell: f64,
    streams: &SeedStream,
    execution: Execution,
) -> Result<CalibrationScan> {
    instrument.validate()?;
    if !(t_int > 0.0 && dwell >= t_int) {
        return Err(Error::config(
            "calibration.dwell",
            format!("need t_int > 0 and dwell >= t_int, got t_int = {t_int}, dwell = {dwell}"),
        ));
    }
    if positions.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(
            "calibration.grid",
            "positions must be strictly increasing",
        ));
    }
    let windows = (dwell / t_int).round() as usize;
    let points = map_indexed(positions.len(), execution, |i| -> Result<Option<(f64, f64, f64)>> {
        let x = positions[i];
        let scene = Scene::single(beam.displaced_to(x))?;
        let outputs = instrument.output_fluxes(&scene)?;
        let input_total = scene.total_power();
        let mut rng = streams.rng(Stream::Calibration, &[i as u64]);
        let mut signal_sum = 0.0;
        let mut reference_sum = 0.0;
        let mut ratios = Vec::with_capacity(windows);
        for _ in 0..windows {
            let w = instrument.read_window(&outputs, input_total, t_int, &mut rng);
            signal_sum += w.signal;
            reference_sum += w.reference;
            if let Some(r) = w.ratio() {
                ratios.push(r);
            }
        }
        if !(reference_sum > 0.0) {
            return Ok(None);
        }
        let (_, var) = mean_and_variance(&ratios);
        Ok(Some((x, signal_sum / reference_sum, (var / windows as f64).sqrt())))
    });

    let mut scan = CalibrationScan {
        positions: Vec::with_capacity(positions.len()),
        normalized_powers: Vec::with_capacity(positions.len()),
        standard_errors: Vec::with_capacity(positions.len()),
        repetitions_per_point: windows,
        excluded: Vec::new(),
    };
    for (point, &x) in points.into_iter().zip(positions) {
        match point? {
            Some((x, ratio, se)) => {
                scan.positions.push(x);
                scan.normalized_powers.push(ratio);
                scan.standard_errors.push(se);
            }
            None => scan.excluded.push(x),
        }
    }
    Ok(scan)
}

/// Polynomial calibration curve `f(x)` of the normalized signal against the
/// beam position `x` (µm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Coefficients in the scaled variable `x / scale`, lowest order first.
    pub scaled_coefficients: Vec<f64>,
    /// Length (µm) the positions were divided by before fitting.
    pub scale: f64,
    pub valid_range: (f64, f64),
    pub fit_residual_rms: f64,
}

impl CalibrationCurve {
    pub fn degree(&self) -> usize {
        self.scaled_coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x / self.scale;
        self.scaled_coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `df/dx`.
    pub fn derivative(&self, x: f64) -> f64 {
        let t = x / self.scale;
        let d = self
            .scaled_coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c);
        d / self.scale
    }

    /// Coefficients of the same polynomial in `x` (µm), lowest order first.
    pub fn coefficients_um(&self) -> Vec<f64> {
        self.scaled_coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c / self.scale.powi(k as i32))
            .collect()
    }
}

/// Ordinary least-squares polynomial fit of `degree` to a calibration scan.
///
/// Positions are divided by the largest `|x|` of the scan before the fit.
pub fn fit_calibration(scan: &CalibrationScan, degree: usize) -> Result<CalibrationCurve> {
    scan.validate()?;
    if degree < 2 {
        return Err(Error::Fit(format!("degree must be at least 2, got {degree}")));
    }
    let n = scan.positions.len();
    if n < degree + 2 {
        return Err(Error::Fit(format!(
            "{n} points cannot constrain a degree-{degree} polynomial (need at least {})",
            degree + 2
        )));
    }
    let scale = scan.positions.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(scale > 0.0) {
        return Err(Error::Fit("scan positions are all zero".into()));
    }
    let vander = DMatrix::from_fn(n, degree + 1, |i, k| (scan.positions[i] / scale).powi(k as i32));
    let rhs = DVector::from_column_slice(&scan.normalized_powers);
    let svd = vander.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Fit(format!(
            "design matrix is ill-conditioned (condition number {condition:.3e}); \
             rescale positions or lower the degree"
        )));
    }
    let coeffs = svd
        .solve(&rhs, f64::EPSILON * smax)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let residual = &vander * &coeffs - &rhs;
    let rms = (residual.norm_squared() / n as f64).sqrt();
    Ok(CalibrationCurve {
        scaled_coefficients: coeffs.iter().copied().collect(),
        scale,
        valid_range: (scan.positions[0], scan.positions[n - 1]),
        fit_residual_rms: rms,
    })
}

/// Two-source curve `g(d) = weight_a f(c + d/2) + weight_b f(c - d/2)` for a
/// pair whose midpoint `c` is known.
///
/// `weight_a` belongs to the source on the `+x` side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSourceCurve {
    pub base: CalibrationCurve,
    pub weight_a: f64,
    pub weight_b: f64,
    /// Midpoint `c` of the pair (µm).
    #[serde(default)]
    pub centre: f64,
    /// `g` is increasing on `[0, branch_end]` (µm).
    pub branch_end: f64,
    /// True when `branch_end` is set by the calibrated range rather than by a
    /// stationary point of `g`.
    pub branch_capped: bool,
}

impl TwoSourceCurve {
    pub fn eval(&self, d: f64) -> f64 {
        self.weight_a * self.base.eval(self.centre + 0.5 * d) + self.weight_b * self.base.eval(self.centre - 0.5 * d)
    }

    pub fn derivative(&self, d: f64) -> f64 {
        0.5 * (self.weight_a * self.base.derivative(self.centre + 0.5 * d)
            - self.weight_b * self.base.derivative(self.centre - 0.5 * d))
    }

    pub fn monotone_branch(&self) -> (f64, f64) {
        (0.0, self.branch_end)
    }
}

/// Weight the calibration curve by the two source powers and locate the
/// increasing branch starting at `d = 0`.
///
/// `p1` is the power of the source at `+d/2`, `p2` of the one at `-d/2`.
pub fn symmetrize(curve: &CalibrationCurve, p1: f64, p2: f64) -> Result<TwoSourceCurve> {
    symmetrize_about(curve, p1, p2, 0.0)
}

/// [`symmetrize`] for a pair centred on `centre` instead of the axis.
pub fn symmetrize_about(curve: &CalibrationCurve, p1: f64, p2: f64, centre: f64) -> Result<TwoSourceCurve> {
    if !(p1 >= 0.0 && p2 >= 0.0 && p1 + p2 > 0.0) {
        return Err(Error::Symmetrization(format!(
            "source powers must be non-negative with positive sum, got {p1} and {p2}"
        )));
    }
    let (lo, hi) = curve.valid_range;
    let cap = 2.0 * (centre - lo).min(hi - centre);
    if !(cap > 0.0) {
        return Err(Error::Symmetrization(format!(
            "calibrated range [{lo}, {hi}] does not straddle the centre {centre}"
        )));
    }
    let mut g = TwoSourceCurve {
        base: curve.clone(),
        weight_a: p1 / (p1 + p2),
        weight_b: p2 / (p1 + p2),
        centre,
        branch_end: cap,
        branch_capped: true,
    };

    let step = cap / TURN_SEARCH_SAMPLES as f64;
    let slope_at = |k: usize| g.derivative(k as f64 * step);
    let rising = (1..=TURN_SEARCH_SAMPLES)
        .find(|&k| slope_at(k) > 0.0)
        .ok_or_else(|| Error::Symmetrization("two-source curve never increases on the calibrated range".into()))?;
    if rising as f64 * step > 0.05 * cap {
        return Err(Error::Symmetrization(format!(
            "two-source curve decreases away from d = 0 up to {:.3} um",
            rising as f64 * step
        )));
    }
    if let Some(k) = (rising + 1..=TURN_SEARCH_SAMPLES).find(|&k| slope_at(k) <= 0.0) {
        let (mut a, mut b) = ((k - 1) as f64 * step, k as f64 * step);
        while b - a > 1e-9 * cap {
            let m = 0.5 * (a + b);
            if g.derivative(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        g.branch_end = a;
        g.branch_capped = false;
    }
    if !(g.eval(g.branch_end) > g.eval(0.0)) {
        return Err(Error::Symmetrization(
            "two-source curve has no increasing branch".into(),
        ));
    }
    Ok(g)
}

/// How an inversion was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    None,
    /// Ratio at or below `g(0)`; reported as `d = 0`.
    BelowFloor,
    /// Ratio at or above the branch maximum; reported as the branch end.
    AboveBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub separation: f64,
    pub clamp: Clamp,
}

/// Solve `g(d) = ratio` on the increasing branch by bisection.
pub fn invert(curve: &TwoSourceCurve, ratio: f64) -> Result<Inversion> {
    if ratio.is_nan() {
        return Err(Error::Input("cannot invert a NaN ratio".into()));
    }
    let (mut lo, mut hi) = curve.monotone_branch();
    if ratio <= curve.eval(lo) {
        return Ok(Inversion {
            separation: 0.0,
            clamp: Clamp::BelowFloor,
        });
    }
    if ratio >= curve.eval(hi) {
        return Ok(Inversion {
            separation: hi,
            clamp: Clamp::AboveBranch,
        });
    }
    while hi - lo > INVERT_TOLERANCE_UM {
        let mid = 0.5 * (lo + hi);
        if curve.eval(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Inversion {
        separation: 0.5 * (lo + hi),
        clamp: Clamp::None,
    })
}
