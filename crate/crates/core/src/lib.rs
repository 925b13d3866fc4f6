//! Bilayer half-BHZ Chern insulator mapped onto a two-tone synthetic Floquet
//! lattice.
//!
//! The crate builds the model Hamiltonians, computes band topology on the
//! Brillouin zone, integrates the driven 4-level dynamics, and reads the
//! Chern number back out of the dynamics through quantized energy pumping
//! and the two-step topological-oscillation protocol. [`harness`] runs
//! parameter sweeps and handles file formats.

pub mod error;
pub mod evolve;
pub mod harness;
pub mod model;
pub mod oscillate;
pub mod pumping;
pub mod smallmat;
pub mod topology;

pub use error::{EvolveError, FitError, HarnessError, ModelError, ProtocolError, SmallMatError, TopologyError};
pub use evolve::{adiabaticity, evolve, prepare_eigenstate, AdiabaticityReport, Evaluation, Observer, SimConfig, Trajectory};
pub use model::{
    bloch_hamiltonian, drive_generator_rate, floquet_hamiltonian, floquet_lattice_hamiltonian, BZPoint,
    BandedComplexMatrix, Drive, DriveConfig, FloquetWindow, ModelParams, GOLDEN_RATIO,
};
pub use smallmat::{
    apply, expectation, expm_minus_i_h, hermitian_eig, inner, BandSolution, Complex, HermitianMatrix4, StateVector4,
    UnitaryMatrix4,
};
pub use topology::{
    chern_band, chern_occupied, classify_phase, gap_scan, phase_boundary_distance, BZGrid, ConeValues, GapReport,
    PhaseLabel, Region,
};
pub use harness::{run_sweep, AxisRange, GValue, GridSpec, Method, PhaseGridResult, PointRecord, SweepOptions};
pub use oscillate::{
    classify_step1, classify_step2, overlap_series, predicted_overlap, two_step_protocol, OscillationConfig,
    OscillationVerdict, OverlapTrace, PhaseCorrection, Step1Class, Step2Class,
};
pub use pumping::{estimate_chern_pumping, fit_slope, integrate_energies, ChernEstimate, PumpTrace, PumpingOutcome};
