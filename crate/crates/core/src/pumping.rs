//! Quantized energy pumping between the two drives.
//!
//! Each occupied band is evolved from its `t = 0` eigenstate. At every step
//! the instantaneous power drawn from drive `m` is the expectation of the
//! time derivative of that drive's part of the Hamiltonian; integrating it
//! gives the energy `E_m^n(t)`. The slopes of linear fits to these energies
//! give the Chern number as `C = sum_n pi (a_2n - a_1n) / (omega1 omega2)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{FitError, ProtocolError};
use crate::evolve::{adiabaticity, driving_ratio, evolve, prepare_eigenstate, AdiabaticityReport, Observer, SimConfig};
use crate::model::{drive_generator_rate, Drive, DriveConfig, ModelParams};
use crate::smallmat::{expectation, StateVector4};

/// Fraction of the earliest samples excluded from slope fits.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.05;
/// Minimum number of samples a fit accepts after warmup.
pub const MIN_FIT_SAMPLES: usize = 100;
/// Below this `eta * gap / max(omega)` a warning is attached.
pub const STRONG_DRIVING_WARN: f64 = 5.0;
/// Below this `eta * gap / max(omega)` the estimate is refused.
pub const STRONG_DRIVING_MIN: f64 = 1.0;
/// Minimum adiabatic fidelity for a confident estimate.
pub const MIN_CONFIDENT_FIDELITY: f64 = 0.9;

/// Cumulative trapezoidal integral of a uniformly sampled rate.
#[derive(Debug, Clone, Copy)]
pub struct TrapezoidAccumulator {
    dt: f64,
    prev: Option<f64>,
    total: f64,
}

impl TrapezoidAccumulator {
    pub fn new(dt: f64) -> Self {
        Self { dt, prev: None, total: 0.0 }
    }

    /// Adds the next sample and returns the integral up to it.
    #[inline]
    pub fn push(&mut self, rate: f64) -> f64 {
        if let Some(p) = self.prev {
            self.total += 0.5 * (p + rate) * self.dt;
        }
        self.prev = Some(rate);
        self.total
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Integrates a full-resolution rate series and keeps every `stride`-th
/// cumulative value (and the last one).
pub fn integrate_energies(rates: &[f64], dt: f64, stride: u64) -> Vec<f64> {
    let stride = stride.max(1) as usize;
    let mut acc = TrapezoidAccumulator::new(dt);
    let last = rates.len().saturating_sub(1);
    rates
        .iter()
        .enumerate()
        .filter_map(|(j, &r)| {
            let e = acc.push(r);
            (j % stride == 0 || j == last).then_some(e)
        })
        .collect()
}

/// Energy series for one band, both drives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BandPumpTrace {
    pub times: Vec<f64>,
    /// `energy[m]` for drive `m + 1`.
    pub energy: [Vec<f64>; 2],
    /// Instantaneous rates at the recorded instants.
    pub rates: [Vec<f64>; 2],
}

/// Observer that integrates the power drawn from each drive at every step
/// and records energies at the trajectory stride.
pub struct PumpRateObserver {
    params: ModelParams,
    drive: DriveConfig,
    stride: u64,
    last_step: u64,
    state_index: usize,
    acc: [TrapezoidAccumulator; 2],
    trace: BandPumpTrace,
}

impl PumpRateObserver {
    /// Observes initial state `state_index` of the trajectory.
    pub fn new(p: &ModelParams, d: &DriveConfig, sim: &SimConfig, state_index: usize) -> Result<Self, ProtocolError> {
        let last_step = sim.steps().map_err(ProtocolError::from)?;
        Ok(Self {
            params: *p,
            drive: *d,
            stride: sim.stride,
            last_step,
            state_index,
            acc: [TrapezoidAccumulator::new(sim.dt); 2],
            trace: BandPumpTrace::default(),
        })
    }

    /// Instantaneous power drawn from each drive.
    pub fn rates(p: &ModelParams, d: &DriveConfig, t: f64, psi: &StateVector4) -> [f64; 2] {
        Drive::BOTH.map(|m| expectation(psi, &drive_generator_rate(p, d, t, m)))
    }

    pub fn into_trace(self) -> BandPumpTrace {
        self.trace
    }
}

impl Observer for PumpRateObserver {
    fn observe(&mut self, step: u64, t: f64, states: &[StateVector4]) {
        let r = Self::rates(&self.params, &self.drive, t, &states[self.state_index]);
        let e = [self.acc[0].push(r[0]), self.acc[1].push(r[1])];
        if step % self.stride == 0 || step == self.last_step {
            self.trace.times.push(t);
            for m in 0..2 {
                self.trace.energy[m].push(e[m]);
                self.trace.rates[m].push(r[m]);
            }
        }
    }
}

/// Energies of both occupied bands, the quantities plotted against time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpTrace {
    pub times: Vec<f64>,
    /// `energy[m][n]`: drive `m + 1`, band `n + 1`.
    pub energy: [[Vec<f64>; 2]; 2],
    /// `rates[m][n]` at the recorded instants.
    pub rates: [[Vec<f64>; 2]; 2],
}

impl PumpTrace {
    pub fn from_bands(bands: [BandPumpTrace; 2]) -> Self {
        let [b1, b2] = bands;
        debug_assert_eq!(b1.times, b2.times);
        let [e11, e21] = b1.energy;
        let [e12, e22] = b2.energy;
        let [r11, r21] = b1.rates;
        let [r12, r22] = b2.rates;
        Self { times: b1.times, energy: [[e11, e12], [e21, e22]], rates: [[r11, r12], [r21, r22]] }
    }

    /// CSV with columns `t, E1_band1, E2_band1, E1_band2, E2_band2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "E1_band1", "E2_band1", "E1_band2", "E2_band2"])?;
        for (k, t) in self.times.iter().enumerate() {
            w.write_record(&[
                format!("{t:e}"),
                format!("{:e}", self.energy[0][0][k]),
                format!("{:e}", self.energy[1][0][k]),
                format!("{:e}", self.energy[0][1][k]),
                format!("{:e}", self.energy[1][1][k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ordinary least-squares line `y = slope * t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(times, values)`, skipping the first
/// `warmup_fraction` of the samples.
pub fn fit_slope(times: &[f64], values: &[f64], warmup_fraction: f64) -> Result<LinearFit, FitError> {
    if times.len() != values.len() {
        return Err(FitError::LengthMismatch { times: times.len(), values: values.len() });
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(FitError::InvalidWarmup(warmup_fraction));
    }
    let skip = (warmup_fraction * times.len() as f64).floor() as usize;
    let (t, y) = (&times[skip..], &values[skip..]);
    if t.len() < MIN_FIT_SAMPLES {
        return Err(FitError::InsufficientSamples { needed: MIN_FIT_SAMPLES, have: t.len() });
    }
    let n = t.len() as f64;
    let t_mean = t.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let dt = ti - t_mean;
        let dy = yi - y_mean;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if !(stt > 0.0) || !stt.is_finite() {
        return Err(FitError::DegenerateTimeAxis);
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let r_squared = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Regression results and the Chern number they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernEstimate {
    /// `slopes[m][n]`: fitted `dE_m^n / dt`.
    pub slopes: [[f64; 2]; 2],
    pub intercepts: [[f64; 2]; 2],
    pub r_squared: [[f64; 2]; 2],
    pub per_band_chern: [f64; 2],
    pub total_chern: f64,
    pub rounded: i32,
    /// `|total_chern - rounded|`.
    pub confidence: f64,
}

impl ChernEstimate {
    /// Assembles the estimate from the four fits, `fits[m][n]`.
    pub fn from_fits(fits: [[LinearFit; 2]; 2], d: &DriveConfig) -> Self {
        let slopes = fits.map(|row| row.map(|f| f.slope));
        let intercepts = fits.map(|row| row.map(|f| f.intercept));
        let r_squared = fits.map(|row| row.map(|f| f.r_squared));
        let scale = PI / (d.omega1 * d.omega2);
        let per_band_chern = [0, 1].map(|n| scale * (slopes[1][n] - slopes[0][n]));
        let total_chern = per_band_chern[0] + per_band_chern[1];
        let rounded = total_chern.round() as i32;
        Self {
            slopes,
            intercepts,
            r_squared,
            per_band_chern,
            total_chern,
            rounded,
            confidence: (total_chern - rounded as f64).abs(),
        }
    }
}

/// Full result of a pumping run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingOutcome {
    pub estimate: ChernEstimate,
    pub trace: PumpTrace,
    /// One report per occupied band.
    pub adiabaticity: [AdiabaticityReport; 2],
    pub driving_ratio: f64,
    /// Set when adiabatic fidelity dropped below [`MIN_CONFIDENT_FIDELITY`].
    pub low_confidence: bool,
    pub warnings: Vec<String>,
}

/// Drive-strength check shared by both readout protocols.
pub(crate) fn check_strong_driving(p: &ModelParams, d: &DriveConfig, warnings: &mut Vec<String>) -> Result<f64, ProtocolError> {
    let ratio = driving_ratio(p, d);
    if !(ratio >= STRONG_DRIVING_MIN) {
        return Err(ProtocolError::WeakDriving { ratio });
    }
    if ratio < STRONG_DRIVING_WARN {
        warnings.push(format!("weak driving: eta*gap/max(omega) = {ratio:.3} < {STRONG_DRIVING_WARN}"));
    }
    Ok(ratio)
}

/// Evolves one band with the pump observer attached.
pub fn pump_band(
    p: &ModelParams,
    d: &DriveConfig,
    sim: &SimConfig,
    band: usize,
) -> Result<(BandPumpTrace, AdiabaticityReport), ProtocolError> {
    let psi = prepare_eigenstate(p, d, band)?;
    let mut obs = PumpRateObserver::new(p, d, sim, 0)?;
    let traj = evolve(p, d, sim, &[psi], &mut [&mut obs])?;
    Ok((obs.into_trace(), adiabaticity(&traj)))
}

/// Chern number from quantized pumping of the two lowest bands.
pub fn estimate_chern_pumping(
    p: &ModelParams,
    d: &DriveConfig,
    sim: &SimConfig,
    warmup_fraction: f64,
) -> Result<PumpingOutcome, ProtocolError> {
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(FitError::InvalidWarmup(warmup_fraction).into());
    }
    let mut warnings = Vec::new();
    let ratio = check_strong_driving(p, d, &mut warnings)?;

    let (b1, b2) = rayon::join(|| pump_band(p, d, sim, 1), || pump_band(p, d, sim, 2));
    let (t1, a1) = b1?;
    let (t2, a2) = b2?;
    let trace = PumpTrace::from_bands([t1, t2]);

    let fit = |m: usize, n: usize| fit_slope(&trace.times, &trace.energy[m][n], warmup_fraction);
    let fits = [[fit(0, 0)?, fit(0, 1)?], [fit(1, 0)?, fit(1, 1)?]];
    let estimate = ChernEstimate::from_fits(fits, d);

    let low_confidence = a1.min_fidelity.min(a2.min_fidelity) < MIN_CONFIDENT_FIDELITY;
    if low_confidence {
        warnings.push(format!(
            "adiabatic fidelity {:.3} below {MIN_CONFIDENT_FIDELITY}",
            a1.min_fidelity.min(a2.min_fidelity)
        ));
    }
    Ok(PumpingOutcome { estimate, trace, adiabaticity: [a1, a2], driving_ratio: ratio, low_confidence, warnings })
}
