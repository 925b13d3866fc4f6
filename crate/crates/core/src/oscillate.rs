//! Two-step topological oscillation readout of `|C|`.
//!
//! Two copies of a superposition of Floquet eigenstates are evolved, one
//! under `H_F(omega t + phi)` and one under `H_F(omega t + phi + dphi)`.
//! Their overlap beats at multiples of `omega_T = |dphi x omega| / 2 pi`
//! set by the Chern differences between bands:
//!
//! `F(t) ~ 1 - 4 sum_{i<j} sin^2((C_i - C_j) omega_T t / 2) P_i P_j`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{FitError, ProtocolError};
use crate::evolve::{eigenbasis_at_start, evolve, Observer, SimConfig};
use crate::model::{floquet_hamiltonian, DriveConfig, ModelParams, GOLDEN_RATIO};
use crate::pumping::{check_strong_driving, TrapezoidAccumulator};
use crate::smallmat::{hermitian_eig, inner, raw_inner, Complex, StateVector4};

/// Relative half-width of the `omega_T` search window.
pub const OMEGA_SEARCH_WIDTH: f64 = 0.1;
/// Best residual must be below this fraction of the runner-up.
pub const AMBIGUITY_RATIO: f64 = 0.5;
/// Oscillation periods `pi / omega_T` a trace must cover.
pub const MIN_PERIODS: f64 = 3.0;
pub const DEFAULT_DT: f64 = 1e-2;
pub const DEFAULT_STRIDE: u64 = 100;

/// Phase offset and initial populations for one overlap run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationConfig {
    pub delta_phi: [f64; 2],
    /// Populations `P_i` of the four eigenstates, ascending in energy.
    pub weights: [f64; 4],
    #[serde(default)]
    pub correction: PhaseCorrection,
}

/// Optional removal of each band's dynamical phase before the overlap is
/// formed. The leading-order overlap formula ignores these phases; without
/// correction they appear as ripple on top of the Chern beating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PhaseCorrection {
    #[default]
    None,
    Dynamical,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self { delta_phi: [GOLDEN_RATIO / 50.0, -1.0 / 50.0], weights: [0.25; 4], correction: PhaseCorrection::None }
    }
}

impl OscillationConfig {
    pub fn new(delta_phi: [f64; 2], weights: [f64; 4]) -> Result<Self, ProtocolError> {
        if !delta_phi.iter().all(|x| x.is_finite()) {
            return Err(ProtocolError::InvalidConfig("delta_phi must be finite".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ProtocolError::InvalidConfig("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ProtocolError::InvalidConfig(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { delta_phi, weights, correction: PhaseCorrection::None })
    }

    pub fn with_weights(self, weights: [f64; 4]) -> Result<Self, ProtocolError> {
        Ok(Self { correction: self.correction, ..Self::new(self.delta_phi, weights)? })
    }

    pub fn with_correction(self, correction: PhaseCorrection) -> Self {
        Self { correction, ..self }
    }

    /// Equal population of the two lower bands.
    pub fn occupied_weights() -> [f64; 4] {
        [0.5, 0.5, 0.0, 0.0]
    }

    pub fn omega_t(&self, d: &DriveConfig) -> f64 {
        cross(self.delta_phi, d).abs() / (2.0 * PI)
    }

    /// Rejects a nonzero `delta_phi` parallel to the drive frequencies.
    pub fn check_against(&self, d: &DriveConfig) -> Result<(), ProtocolError> {
        let dn = self.delta_phi[0].hypot(self.delta_phi[1]);
        if dn > 0.0 && cross(self.delta_phi, d).abs() <= 1e-12 * dn * d.omega1.hypot(d.omega2) {
            return Err(ProtocolError::InvalidConfig("delta_phi is parallel to the drive frequencies".into()));
        }
        Ok(())
    }

    /// `T = 3 pi / omega_T` rounded up to a whole number of steps.
    pub fn default_sim(&self, d: &DriveConfig, dt: f64, stride: u64) -> Result<SimConfig, ProtocolError> {
        let w = self.omega_t(d);
        if !(w > 0.0) {
            return Err(ProtocolError::InvalidConfig("omega_T vanishes".into()));
        }
        let steps = (MIN_PERIODS * PI / w / dt).ceil();
        Ok(SimConfig::new(steps * dt, dt, stride)?)
    }
}

fn cross(delta: [f64; 2], d: &DriveConfig) -> f64 {
    delta[0] * d.omega2 - delta[1] * d.omega1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapTrace {
    pub times: Vec<f64>,
    pub f: Vec<f64>,
}

impl OverlapTrace {
    /// CSV with columns `t, F`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "F"])?;
        for (t, f) in self.times.iter().zip(&self.f) {
            w.write_record(&[format!("{t:e}"), format!("{f:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigenvectors at `phi + dphi`, each rephased so that its overlap with the
/// matching vector at `phi` is real and positive.
fn aligned_basis(reference: &[StateVector4; 4], shifted: [StateVector4; 4]) -> Result<[StateVector4; 4], ProtocolError> {
    let mut out = shifted;
    for (j, (u, v)) in reference.iter().zip(shifted.iter()).enumerate() {
        let o = inner(v, u);
        if o.norm() < 0.5 {
            return Err(ProtocolError::InvalidConfig(format!(
                "band {} eigenvector changes too much under delta_phi (overlap {:.3})",
                j + 1,
                o.norm()
            )));
        }
        out[j] = v.scale_phase(o / o.norm());
    }
    Ok(out)
}

/// Accumulates `int E_j dt` for the four instantaneous bands.
struct DynamicalPhase {
    params: ModelParams,
    drive: DriveConfig,
    stride: u64,
    last_step: u64,
    acc: [TrapezoidAccumulator; 4],
    recorded: Vec<[f64; 4]>,
}

impl Observer for DynamicalPhase {
    fn observe(&mut self, step: u64, t: f64, _: &[StateVector4]) {
        let e = hermitian_eig(&floquet_hamiltonian(&self.params, &self.drive, t)).eigenvalues;
        let phase = [0, 1, 2, 3].map(|j| self.acc[j].push(e[j]));
        if step % self.stride == 0 || step == self.last_step {
            self.recorded.push(phase);
        }
    }
}

/// Evolves each eigenvector and returns, per recorded instant, the weighted
/// superposition `sum_j sqrt(P_j) U(t) u_j`.
fn evolve_superposition(
    p: &ModelParams,
    d: &DriveConfig,
    sim: &SimConfig,
    basis: &[StateVector4; 4],
    osc: &OscillationConfig,
) -> Result<(Vec<f64>, Vec<[Complex; 4]>), ProtocolError> {
    let mut dyn_phase = DynamicalPhase {
        params: *p,
        drive: *d,
        stride: sim.stride,
        last_step: sim.steps()?,
        acc: [TrapezoidAccumulator::new(sim.dt); 4],
        recorded: Vec::new(),
    };
    let traj = match osc.correction {
        PhaseCorrection::None => evolve(p, d, sim, basis, &mut [])?,
        PhaseCorrection::Dynamical => evolve(p, d, sim, basis, &mut [&mut dyn_phase])?,
    };
    let amps = osc.weights.map(f64::sqrt);
    let psi = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, states)| {
            let mut a = [Complex::new(0.0, 0.0); 4];
            for (j, s) in states.iter().enumerate() {
                let c = match osc.correction {
                    PhaseCorrection::None => Complex::new(amps[j], 0.0),
                    PhaseCorrection::Dynamical => Complex::from_polar(amps[j], dyn_phase.recorded[k][j]),
                };
                for (ai, si) in a.iter_mut().zip(s.amplitudes()) {
                    *ai += si * c;
                }
            }
            a
        })
        .collect();
    Ok((traj.times, psi))
}

/// Overlap `|<psi(t)|psi'(t)>|^2` between the unshifted and phase-shifted runs.
pub fn overlap_series(
    p: &ModelParams,
    d: &DriveConfig,
    osc: &OscillationConfig,
    sim: &SimConfig,
) -> Result<OverlapTrace, ProtocolError> {
    check_strong_driving(p, d, &mut Vec::new())?;
    osc.check_against(d)?;
    let d_shift = d.shifted(osc.delta_phi)?;
    let basis = eigenbasis_at_start(p, d)?;
    let basis_shift = aligned_basis(&basis, eigenbasis_at_start(p, &d_shift)?)?;

    let (a, b) = rayon::join(
        || evolve_superposition(p, d, sim, &basis, osc),
        || evolve_superposition(p, &d_shift, sim, &basis_shift, osc),
    );
    let ((times, psi), (_, psi_shift)) = (a?, b?);
    let f = psi
        .iter()
        .zip(&psi_shift)
        .map(|(x, y)| raw_inner(x, y).norm_sqr().clamp(0.0, 1.0))
        .collect();
    Ok(OverlapTrace { times, f })
}

/// Leading-order overlap for band Chern numbers `chern` and populations `weights`.
pub fn predicted_overlap(chern: [i32; 4], weights: [f64; 4], omega_t: f64, t: f64) -> f64 {
    let mut f = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let x = 0.5 * f64::from(chern[i] - chern[j]) * omega_t * t;
            f -= 4.0 * x.sin().powi(2) * weights[i] * weights[j];
        }
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step1Class {
    /// `cos^2(omega_T t)`: band Cherns a permutation of `(-1,-1,1,1)`.
    FullMixCos2,
    /// `cos^4(omega_T t / 2)`: `|C| = 1`.
    MixedCos4,
    /// No beating: `C = 0` with all bands trivial.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step2Class {
    /// Occupied bands share a Chern number: `|C| = 2`.
    FlatC2,
    /// Occupied bands carry opposite Chern numbers: `C = 0`.
    Cos2C0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step1Fit {
    pub class: Step1Class,
    /// Mean squared residuals for cos^2, cos^4, flat.
    pub residuals: [f64; 3],
    /// Refined `omega_T` of the winning curve, absent when flat wins.
    pub fitted_omega_t: Option<f64>,
}

impl Step1Fit {
    pub fn residual(&self) -> f64 {
        self.residuals[self.class as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step2Fit {
    pub class: Step2Class,
    /// Mean squared residuals for flat, cos^2.
    pub residuals: [f64; 2],
    pub fitted_omega_t: Option<f64>,
}

impl Step2Fit {
    pub fn residual(&self) -> f64 {
        self.residuals[self.class as usize]
    }
}

fn cos2(x: f64) -> f64 {
    x.cos().powi(2)
}

fn cos4_half(x: f64) -> f64 {
    (0.5 * x).cos().powi(4)
}

fn mse(trace: &OverlapTrace, curve: impl Fn(f64) -> f64) -> f64 {
    let n = trace.f.len() as f64;
    trace.times.iter().zip(&trace.f).map(|(&t, &f)| (f - curve(t)).powi(2)).sum::<f64>() / n
}

/// Best `omega` in `omega0 * [0.9, 1.1]` for `curve(omega t)`: grid scan then
/// golden-section refinement around the best grid point.
fn refine_omega(trace: &OverlapTrace, omega0: f64, curve: fn(f64) -> f64) -> (f64, f64) {
    const SCAN: usize = 80;
    let lo = omega0 * (1.0 - OMEGA_SEARCH_WIDTH);
    let hi = omega0 * (1.0 + OMEGA_SEARCH_WIDTH);
    let h = (hi - lo) / SCAN as f64;
    let cost = |w: f64| mse(trace, |t| curve(w * t));
    let best = (0..=SCAN)
        .map(|i| (i, cost(lo + i as f64 * h)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap()
        .0;
    let (mut a, mut b) = ((lo + (best as f64 - 1.0) * h).max(lo), (lo + (best as f64 + 1.0) * h).min(hi));
    let r = GOLDEN_RATIO;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..40 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = cost(d);
        }
    }
    let w = 0.5 * (a + b);
    (w, cost(w))
}

fn check_trace(trace: &OverlapTrace, omega_t: f64) -> Result<(), FitError> {
    if trace.times.len() != trace.f.len() {
        return Err(FitError::LengthMismatch { times: trace.times.len(), values: trace.f.len() });
    }
    if !(omega_t > 0.0 && omega_t.is_finite()) {
        return Err(FitError::DegenerateTimeAxis);
    }
    let span = match (trace.times.first(), trace.times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let needed = MIN_PERIODS * PI / omega_t;
    if span < needed * (1.0 - 1e-9) {
        return Err(FitError::ShortTrace { span, needed });
    }
    Ok(())
}

/// Index of the smallest residual, provided it beats all others by the
/// ambiguity margin.
fn decisive(residuals: &[f64]) -> Result<usize, FitError> {
    let mut idx: Vec<usize> = (0..residuals.len()).collect();
    idx.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]).then(a.cmp(&b)));
    let (best, second) = (residuals[idx[0]], residuals[idx[1]]);
    if best < AMBIGUITY_RATIO * second {
        Ok(idx[0])
    } else {
        Err(FitError::AmbiguousFit { best, second })
    }
}

/// Chooses between `cos^2(omega_T t)`, `cos^4(omega_T t / 2)` and `F = 1`.
pub fn classify_step1(trace: &OverlapTrace, omega_t: f64) -> Result<Step1Fit, FitError> {
    check_trace(trace, omega_t)?;
    let (w2, r2) = refine_omega(trace, omega_t, cos2);
    let (w4, r4) = refine_omega(trace, omega_t, cos4_half);
    let rf = mse(trace, |_| 1.0);
    let residuals = [r2, r4, rf];
    let (class, fitted_omega_t) = match decisive(&residuals)? {
        0 => (Step1Class::FullMixCos2, Some(w2)),
        1 => (Step1Class::MixedCos4, Some(w4)),
        _ => (Step1Class::Flat, None),
    };
    Ok(Step1Fit { class, residuals, fitted_omega_t })
}

/// Chooses between `F = 1` and `cos^2(omega_T t)` for the occupied-pair run.
pub fn classify_step2(trace: &OverlapTrace, omega_t: f64) -> Result<Step2Fit, FitError> {
    check_trace(trace, omega_t)?;
    let (w2, r2) = refine_omega(trace, omega_t, cos2);
    let rf = mse(trace, |_| 1.0);
    let residuals = [rf, r2];
    let (class, fitted_omega_t) = match decisive(&residuals)? {
        0 => (Step2Class::FlatC2, None),
        _ => (Step2Class::Cos2C0, Some(w2)),
    };
    Ok(Step2Fit { class, residuals, fitted_omega_t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationVerdict {
    pub step1: Option<Step1Fit>,
    pub step2: Option<Step2Fit>,
    /// `None` when a fit was ambiguous.
    pub abs_chern: Option<u32>,
    pub fitted_omega_t: Option<f64>,
    pub analytic_omega_t: f64,
    pub unclassified_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationOutcome {
    pub verdict: OscillationVerdict,
    pub step1_trace: OverlapTrace,
    pub step2_trace: Option<OverlapTrace>,
}

/// Runs step 1 with equal weights and, when it shows full mixing, step 2
/// with the two lower bands populated.
pub fn two_step_protocol(
    p: &ModelParams,
    d: &DriveConfig,
    osc: &OscillationConfig,
    sim: &SimConfig,
) -> Result<OscillationOutcome, ProtocolError> {
    let omega_t = osc.omega_t(d);
    let step1_osc = osc.with_weights([0.25; 4])?;
    let step1_trace = overlap_series(p, d, &step1_osc, sim)?;
    let mut verdict = OscillationVerdict {
        step1: None,
        step2: None,
        abs_chern: None,
        fitted_omega_t: None,
        analytic_omega_t: omega_t,
        unclassified_reason: None,
    };
    let step1 = match classify_step1(&step1_trace, omega_t) {
        Ok(fit) => fit,
        Err(e @ FitError::AmbiguousFit { .. }) => {
            verdict.unclassified_reason = Some(format!("step 1: {e}"));
            return Ok(OscillationOutcome { verdict, step1_trace, step2_trace: None });
        }
        Err(e) => return Err(e.into()),
    };
    verdict.step1 = Some(step1);
    verdict.fitted_omega_t = step1.fitted_omega_t;
    match step1.class {
        Step1Class::MixedCos4 => verdict.abs_chern = Some(1),
        Step1Class::Flat => verdict.abs_chern = Some(0),
        Step1Class::FullMixCos2 => {
            let step2_osc = osc.with_weights(OscillationConfig::occupied_weights())?;
            let trace = overlap_series(p, d, &step2_osc, sim)?;
            match classify_step2(&trace, omega_t) {
                Ok(fit) => {
                    verdict.step2 = Some(fit);
                    verdict.abs_chern = Some(match fit.class {
                        Step2Class::FlatC2 => 2,
                        Step2Class::Cos2C0 => 0,
                    });
                }
                Err(e @ FitError::AmbiguousFit { .. }) => verdict.unclassified_reason = Some(format!("step 2: {e}")),
                Err(e) => return Err(e.into()),
            }
            return Ok(OscillationOutcome { verdict, step1_trace, step2_trace: Some(trace) });
        }
    }
    Ok(OscillationOutcome { verdict, step1_trace, step2_trace: None })
}
