//! Stepwise time evolution under the driven Hamiltonian.
//!
//! Each step multiplies the state by the exact exponential of the
//! Hamiltonian sampled once in the step, so the only discretization error
//! comes from that sampling. Steps are applied to states directly and the
//! accumulated propagator is never formed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::EvolveError;
use crate::model::{floquet_hamiltonian, DriveConfig, ModelParams};
use crate::smallmat::{hermitian_eig, raw_inner, StateVector4};
use crate::topology::{gap_scan, BZGrid};

/// Norm drift tolerated before a run is aborted.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;
/// Default recording stride.
pub const DEFAULT_STRIDE: u64 = 100;

/// Where within a step the Hamiltonian is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// `H(t_j)`, the plain left-endpoint product.
    #[default]
    LeftEndpoint,
    /// `H(t_j + dt / 2)`.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub total_time: f64,
    pub dt: f64,
    pub stride: u64,
    #[serde(default)]
    pub evaluation: Evaluation,
}

impl SimConfig {
    pub fn new(total_time: f64, dt: f64, stride: u64) -> Result<Self, EvolveError> {
        let s = Self { total_time, dt, stride, evaluation: Evaluation::LeftEndpoint };
        s.steps()?;
        Ok(s)
    }

    pub fn with_evaluation(mut self, evaluation: Evaluation) -> Self {
        self.evaluation = evaluation;
        self
    }

    /// Number of steps `N = T / dt`; errors unless this is integral within rounding.
    pub fn steps(&self) -> Result<u64, EvolveError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolveError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.total_time.is_finite() && self.total_time >= 0.0) {
            return Err(EvolveError::InvalidConfig(format!("total time must be non-negative, got {}", self.total_time)));
        }
        if self.stride == 0 {
            return Err(EvolveError::InvalidConfig("stride must be at least 1".into()));
        }
        let ratio = self.total_time / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 * ratio.max(1.0) {
            return Err(EvolveError::InvalidConfig(format!("T / dt = {ratio} is not an integer")));
        }
        if n > 2f64.powi(31) {
            return Err(EvolveError::InvalidConfig(format!("{n} steps exceeds 2^31")));
        }
        Ok(n as u64)
    }

    /// Time at which step `j` samples the Hamiltonian.
    #[inline]
    pub fn sample_time(&self, j: u64) -> f64 {
        let t = j as f64 * self.dt;
        match self.evaluation {
            Evaluation::LeftEndpoint => t,
            Evaluation::Midpoint => t + 0.5 * self.dt,
        }
    }
}

/// Per-step measurement hook.
///
/// Called with `(j, t_j, states at t_j)` for `j = 0..=N`, before the step's
/// propagator is applied. The call at `j = N` sees the final states.
pub trait Observer {
    fn observe(&mut self, step: u64, t: f64, states: &[StateVector4]);
}

impl<F: FnMut(u64, f64, &[StateVector4])> Observer for F {
    fn observe(&mut self, step: u64, t: f64, states: &[StateVector4]) {
        self(step, t, states)
    }
}

/// States recorded every `stride` steps (plus the final step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Step index of each recorded instant.
    pub steps: Vec<u64>,
    /// `states[instant][initial]`.
    pub states: Vec<Vec<StateVector4>>,
    pub params: ModelParams,
    pub drive: DriveConfig,
    pub sim: SimConfig,
}

impl Trajectory {
    pub fn initial_count(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_states(&self) -> &[StateVector4] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Largest deviation of any recorded norm from 1.
    pub fn max_norm_drift(&self) -> f64 {
        self.states.iter().flatten().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// CSV with `t` and the real and imaginary parts of each amplitude per initial state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for s in 0..self.initial_count() {
            for a in 0..4 {
                header.push(format!("re_{s}_{a}"));
                header.push(format!("im_{s}_{a}"));
            }
        }
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.states) {
            let mut rec = vec![format!("{t:e}")];
            for s in row {
                for z in s.amplitudes() {
                    rec.push(format!("{:e}", z.re));
                    rec.push(format!("{:e}", z.im));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigenstate `band` (1-based, ascending) of the driven Hamiltonian at `t = 0`.
pub fn prepare_eigenstate(p: &ModelParams, d: &DriveConfig, band: usize) -> Result<StateVector4, EvolveError> {
    let basis = eigenbasis_at_start(p, d)?;
    if !(1..=4).contains(&band) {
        return Err(crate::error::ModelError::InvalidBand(band).into());
    }
    Ok(basis[band - 1])
}

/// All four eigenstates of `H_F(0)`; errors if any pair is degenerate.
pub fn eigenbasis_at_start(p: &ModelParams, d: &DriveConfig) -> Result<[StateVector4; 4], EvolveError> {
    let sol = hermitian_eig(&floquet_hamiltonian(p, d, 0.0));
    for b in 0..3 {
        let gap = sol.eigenvalues[b + 1] - sol.eigenvalues[b];
        if gap <= 1e-9 {
            return Err(EvolveError::DegenerateInitialState { band: b + 1, gap });
        }
    }
    Ok(sol.eigenvectors)
}

/// Evolve `initial` states over `sim.total_time`.
pub fn evolve(
    p: &ModelParams,
    d: &DriveConfig,
    sim: &SimConfig,
    initial: &[StateVector4],
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, EvolveError> {
    let n = sim.steps()?;
    let mut states: Vec<StateVector4> = initial.to_vec();
    for s in &states {
        StateVector4::new(*s.amplitudes())?;
    }
    let mut traj = Trajectory {
        times: Vec::with_capacity((n / sim.stride + 2) as usize),
        steps: Vec::with_capacity((n / sim.stride + 2) as usize),
        states: Vec::with_capacity((n / sim.stride + 2) as usize),
        params: *p,
        drive: *d,
        sim: *sim,
    };

    for j in 0..=n {
        let t = j as f64 * sim.dt;
        for obs in observers.iter_mut() {
            obs.observe(j, t, &states);
        }
        if j % sim.stride == 0 || j == n {
            for s in &states {
                let dev = (s.norm() - 1.0).abs();
                if dev > NORM_DRIFT_LIMIT {
                    return Err(EvolveError::NumericalDrift { step: j, deviation: dev });
                }
            }
            traj.times.push(t);
            traj.steps.push(j);
            traj.states.push(states.clone());
        }
        if j == n {
            break;
        }
        let sol = hermitian_eig(&floquet_hamiltonian(p, d, sim.sample_time(j)));
        for s in states.iter_mut() {
            *s = StateVector4::from_raw(sol.propagate(sim.dt, s.amplitudes()));
        }
    }
    Ok(traj)
}

/// How closely a trajectory follows the instantaneous eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    /// Minimum over recorded instants and initial states of the weight kept
    /// in the bands populated at `t = 0`.
    pub min_fidelity: f64,
    /// `eta * direct_gap / max(omega1, omega2)`.
    pub ratio: f64,
}

/// Population threshold for a band to count as occupied at `t = 0`.
const OCCUPIED_WEIGHT: f64 = 1e-6;

/// Adiabaticity of a trajectory.
///
/// The reference subspace of each initial state is the set of instantaneous
/// bands it populates at `t = 0`; a single eigenstate is tracked by index,
/// a superposition through the projector onto its bands.
pub fn adiabaticity(traj: &Trajectory) -> AdiabaticityReport {
    let p = &traj.params;
    let d = &traj.drive;
    let mut min_fid: f64 = 1.0;
    let mut occupied: Vec<Vec<usize>> = Vec::new();
    for (k, (&t, row)) in traj.times.iter().zip(&traj.states).enumerate() {
        let sol = hermitian_eig(&floquet_hamiltonian(p, d, t));
        if k == 0 {
            occupied = row
                .iter()
                .map(|s| {
                    (0..4)
                        .filter(|&b| raw_inner(sol.eigenvectors[b].amplitudes(), s.amplitudes()).norm_sqr() > OCCUPIED_WEIGHT)
                        .collect()
                })
                .collect();
        }
        for (s, bands) in row.iter().zip(&occupied) {
            let norm2 = s.norm() * s.norm();
            let fid: f64 = bands
                .iter()
                .map(|&b| raw_inner(sol.eigenvectors[b].amplitudes(), s.amplitudes()).norm_sqr())
                .sum::<f64>()
                / norm2;
            min_fid = min_fid.min(fid.clamp(0.0, 1.0));
        }
    }
    AdiabaticityReport { min_fidelity: min_fid, ratio: driving_ratio(p, d) }
}

/// `eta * Delta / max(omega)` with `Delta` from a default-grid gap scan of the bare model.
pub fn driving_ratio(p: &ModelParams, d: &DriveConfig) -> f64 {
    let gap = gap_scan(p, BZGrid::default()).direct_gap;
    p.eta * gap / d.max_omega()
}
