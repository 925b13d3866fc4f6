use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmallMatError {
    #[error("matrix is not Hermitian (max defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not unitary (max defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid drive configuration: {0}")]
    InvalidDrive(String),
    #[error("drive index must be 1 or 2, got {0}")]
    InvalidDriveIndex(usize),
    #[error("band index must be in 1..=4, got {0}")]
    InvalidBand(usize),
    #[error("Floquet window radius must be at least 1, got {0}")]
    InvalidWindow(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("grid must have at least 8 points per axis, got {0}")]
    GridTooSmall(usize),
    #[error("band {band} touches a neighbouring band at k = ({kx:.4}, {ky:.4}) (separation {gap:.3e})")]
    DegenerateBand { band: usize, kx: f64, ky: f64, gap: f64 },
    #[error("direct gap between occupied and empty bands closes at k = ({kx:.4}, {ky:.4}) (gap {gap:.3e})")]
    Gapless { kx: f64, ky: f64, gap: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("initial eigenstate for band {band} is degenerate (separation {gap:.3e})")]
    DegenerateInitialState { band: usize, gap: f64 },
    #[error("norm drift {deviation:.3e} at step {step} exceeds tolerance")]
    NumericalDrift { step: u64, deviation: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} samples after warmup, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("time axis is degenerate")]
    DegenerateTimeAxis,
    #[error("series lengths differ ({times} times vs {values} values)")]
    LengthMismatch { times: usize, values: usize },
    #[error("warmup fraction {0} outside [0, 1)")]
    InvalidWarmup(f64),
    #[error("trace spans {span:.4e}, needs at least {needed:.4e}")]
    ShortTrace { span: f64, needed: f64 },
    #[error("fit is ambiguous: best residual {best:.3e} not below half of runner-up {second:.3e}")]
    AmbiguousFit { best: f64, second: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("drive too weak for adiabatic following: eta*gap/max(omega) = {ratio:.3}")]
    WeakDriving { ratio: f64 },
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
