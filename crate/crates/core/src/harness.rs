//! Phase-diagram sweeps, checkpointing and export formats.
//!
//! A sweep is described by a [`GridSpec`], stored as TOML:
//!
//! ```toml
//! version = 1
//! method = "pumping"
//! g = 0.5
//!
//! [m1]
//! min = -4.0
//! max = 4.0
//! count = 11
//!
//! [m2]
//! min = -4.0
//! max = 4.0
//! count = 11
//!
//! [sim]
//! eta = 4.0
//! total_time = 5000.0
//! dt = 0.01
//! ```
//!
//! `g` is either a number or a `{ min, max, count }` table. Every key under
//! `[sim]` is optional; missing keys take the method defaults.
//!
//! The checkpoint is a JSON-lines file. Its first line is a header holding
//! the checkpoint version and the spec; every further line is one finished
//! [`PointRecord`].

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::evolve::SimConfig;
use crate::model::{DriveConfig, ModelParams};
use crate::oscillate::{two_step_protocol, OscillationConfig, PhaseCorrection};
use crate::pumping::{estimate_chern_pumping, DEFAULT_WARMUP_FRACTION};
use crate::topology::{chern_occupied, classify_phase, gap_scan, BZGrid, DEFAULT_BOUNDARY_TOL, DEFAULT_GRID};

pub const CONFIG_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
pub const RESULT_SCHEMA_VERSION: u32 = 1;
/// Environment variable read for the default worker count.
pub const WORKERS_ENV: &str = "FLOQUET_WORKERS";

/// `count` evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self, HarnessError> {
        let r = Self { min, max, count };
        r.validate("range")?;
        Ok(r)
    }

    fn validate(&self, name: &str) -> Result<(), HarnessError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(HarnessError::Config(format!("{name}: need finite min <= max")));
        }
        if self.count < 2 {
            return Err(HarnessError::Config(format!("{name}: count must be at least 2")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let h = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + i as f64 * h })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GValue {
    Single(f64),
    Range(AxisRange),
}

impl GValue {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GValue::Single(g) => vec![*g],
            GValue::Range(r) => r.values(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Analytic,
    LatticeChern,
    Pumping,
    Oscillation,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::LatticeChern => "lattice_chern",
            Method::Pumping => "pumping",
            Method::Oscillation => "oscillation",
        }
    }
}

/// Optional per-sweep simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamical_phase_correction: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub version: u32,
    pub method: Method,
    pub g: GValue,
    pub m1: AxisRange,
    pub m2: AxisRange,
    #[serde(default)]
    pub sim: SimOverrides,
}

/// Fully resolved settings for one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedSim {
    pub eta: f64,
    pub drive: DriveConfig,
    /// `None` for the oscillation default `T = 3 pi / omega_T`.
    pub total_time: Option<f64>,
    pub dt: f64,
    pub stride: u64,
    pub warmup_fraction: f64,
    pub grid: BZGrid,
    pub boundary_tol: f64,
    pub correction: PhaseCorrection,
}

impl GridSpec {
    pub fn new(method: Method, g: GValue, m1: AxisRange, m2: AxisRange) -> Result<Self, HarnessError> {
        let s = Self { version: CONFIG_VERSION, method, g, m1, m2, sim: SimOverrides::default() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.m1.validate("m1")?;
        self.m2.validate("m2")?;
        match self.g {
            GValue::Single(g) if !g.is_finite() => return Err(HarnessError::Config("g must be finite".into())),
            GValue::Range(r) => r.validate("g")?,
            _ => {}
        }
        self.resolve()?;
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self, HarnessError> {
        let spec: Self = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Method defaults with the overrides applied.
    pub fn resolve(&self) -> Result<ResolvedSim, HarnessError> {
        let o = &self.sim;
        let (eta, total_time) = match self.method {
            Method::Oscillation => (2.0, None),
            _ => (4.0, Some(5e3)),
        };
        let omega1 = o.omega1.unwrap_or(0.1);
        let r = ResolvedSim {
            eta: o.eta.unwrap_or(eta),
            drive: DriveConfig::golden(omega1)?,
            total_time: o.total_time.or(total_time),
            dt: o.dt.unwrap_or(1e-2),
            stride: o.stride.unwrap_or(100),
            warmup_fraction: o.warmup_fraction.unwrap_or(DEFAULT_WARMUP_FRACTION),
            grid: BZGrid::new(o.grid_n.unwrap_or(DEFAULT_GRID))?,
            boundary_tol: o.boundary_tol.unwrap_or(DEFAULT_BOUNDARY_TOL),
            correction: if o.dynamical_phase_correction.unwrap_or(false) {
                PhaseCorrection::Dynamical
            } else {
                PhaseCorrection::None
            },
        };
        ModelParams::new(0.0, 0.0, 0.0, r.eta)?;
        if let Some(t) = r.total_time {
            SimConfig::new(t, r.dt, r.stride).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if !(0.0..1.0).contains(&r.warmup_fraction) {
            return Err(HarnessError::Config("warmup_fraction must lie in [0, 1)".into()));
        }
        if !(r.boundary_tol >= 0.0) {
            return Err(HarnessError::Config("boundary_tol must be non-negative".into()));
        }
        Ok(r)
    }

    /// Grid points ordered by g, then m1, then m2.
    pub fn points(&self) -> Vec<GridPoint> {
        let (gs, m1s, m2s) = (self.g.values(), self.m1.values(), self.m2.values());
        let mut out = Vec::with_capacity(gs.len() * m1s.len() * m2s.len());
        for &g in &gs {
            for &m1 in &m1s {
                for &m2 in &m2s {
                    out.push(GridPoint { index: out.len(), m1, m2, g });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
    pub method: Method,
    pub chern_estimate: Option<f64>,
    pub rounded: Option<i32>,
    /// Direct gap of the undriven Bloch bands.
    pub direct_gap: f64,
    pub confidence: Option<f64>,
    pub region: Option<String>,
    pub error: Option<String>,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time: f64,
}

impl PointRecord {
    /// Copy with `wall_time` zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        Self { wall_time: 0.0, ..self.clone() }
    }
}

/// Evaluates one grid point. Failures are recorded, not propagated.
pub fn evaluate_point(spec: &GridSpec, sim: &ResolvedSim, pt: &GridPoint) -> PointRecord {
    let start = Instant::now();
    let mut rec = PointRecord {
        index: pt.index,
        m1: pt.m1,
        m2: pt.m2,
        g: pt.g,
        method: spec.method,
        chern_estimate: None,
        rounded: None,
        direct_gap: f64::NAN,
        confidence: None,
        region: None,
        error: None,
        wall_time: 0.0,
    };
    let outcome = (|| -> Result<(), HarnessError> {
        let bare = ModelParams::bare(pt.m1, pt.m2, pt.g)?;
        rec.direct_gap = gap_scan(&bare, sim.grid).direct_gap;
        let label = classify_phase(&bare, sim.boundary_tol);
        rec.region = Some(label.region.name().to_string());
        let driven = bare.with_eta(sim.eta)?;
        match spec.method {
            Method::Analytic => match label.chern {
                Some(c) => {
                    rec.chern_estimate = Some(f64::from(c));
                    rec.rounded = Some(c);
                    rec.confidence = Some(0.0);
                }
                None => rec.error = Some("phase boundary".into()),
            },
            Method::LatticeChern => {
                let c = chern_occupied(&bare, sim.grid)?;
                rec.chern_estimate = Some(f64::from(c));
                rec.rounded = Some(c);
                rec.confidence = Some(0.0);
            }
            Method::Pumping => {
                let t = sim.total_time.expect("pumping always has a total time");
                let cfg = SimConfig::new(t, sim.dt, sim.stride).map_err(|e| HarnessError::Config(e.to_string()))?;
                let out = estimate_chern_pumping(&driven, &sim.drive, &cfg, sim.warmup_fraction)?;
                rec.chern_estimate = Some(out.estimate.total_chern);
                rec.rounded = Some(out.estimate.rounded);
                rec.confidence = Some(out.estimate.confidence);
                if out.low_confidence {
                    rec.error = Some("low adiabatic fidelity".into());
                }
            }
            Method::Oscillation => {
                let osc = OscillationConfig::default().with_correction(sim.correction);
                let cfg = match sim.total_time {
                    Some(t) => SimConfig::new(t, sim.dt, sim.stride).map_err(|e| HarnessError::Config(e.to_string()))?,
                    None => osc.default_sim(&sim.drive, sim.dt, sim.stride)?,
                };
                let out = two_step_protocol(&driven, &sim.drive, &osc, &cfg)?;
                match out.verdict.abs_chern {
                    Some(c) => {
                        rec.chern_estimate = Some(f64::from(c));
                        rec.rounded = Some(c as i32);
                    }
                    None => rec.error = out.verdict.unclassified_reason,
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec.wall_time = start.elapsed().as_secs_f64();
    rec
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGridResult {
    pub spec: GridSpec,
    /// Sorted by grid index.
    pub records: Vec<PointRecord>,
}

impl PhaseGridResult {
    pub fn is_complete(&self) -> bool {
        self.records.len() == self.spec.points().len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    /// Evaluate at most this many new points, then stop.
    pub max_points: Option<usize>,
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    checkpoint_version: u32,
    spec: GridSpec,
}

/// Completed records keyed by index. A torn final line is ignored.
pub fn read_checkpoint(path: &Path, spec: &GridSpec) -> Result<BTreeMap<usize, PointRecord>, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: CheckpointHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(|e| HarnessError::Checkpoint(format!("bad header: {e}")))?,
        None => return Ok(BTreeMap::new()),
    };
    if header.checkpoint_version != CHECKPOINT_VERSION {
        return Err(HarnessError::Checkpoint(format!("unsupported version {}", header.checkpoint_version)));
    }
    if header.spec != *spec {
        return Err(HarnessError::Checkpoint("checkpoint was written for a different spec".into()));
    }
    let body: Vec<String> = lines.collect::<Result<_, _>>()?;
    let n_points = spec.points().len();
    let mut out = BTreeMap::new();
    for (k, line) in body.iter().enumerate() {
        match serde_json::from_str::<PointRecord>(line) {
            Ok(r) if r.index < n_points => {
                out.insert(r.index, r);
            }
            Ok(r) => return Err(HarnessError::Checkpoint(format!("record index {} out of range", r.index))),
            Err(_) if k + 1 == body.len() => {}
            Err(e) => return Err(HarnessError::Checkpoint(format!("line {}: {e}", k + 2))),
        }
    }
    Ok(out)
}

fn open_checkpoint(path: &Path, spec: &GridSpec, done: &BTreeMap<usize, PointRecord>) -> Result<File, HarnessError> {
    // Rewrite from the parsed records so a torn trailing line is dropped.
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        let header = CheckpointHeader { checkpoint_version: CHECKPOINT_VERSION, spec: *spec };
        writeln!(f, "{}", serde_json::to_string(&header)?)?;
        for r in done.values() {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(OpenOptions::new().append(true).open(path)?)
}

/// Evaluates every grid point not already in the checkpoint.
pub fn run_sweep(spec: &GridSpec, opts: &SweepOptions) -> Result<PhaseGridResult, HarnessError> {
    spec.validate()?;
    let sim = spec.resolve()?;
    let mut done = match &opts.checkpoint {
        Some(p) if p.exists() => read_checkpoint(p, spec)?,
        _ => BTreeMap::new(),
    };
    let mut todo: Vec<GridPoint> = spec.points().into_iter().filter(|p| !done.contains_key(&p.index)).collect();
    if let Some(m) = opts.max_points {
        todo.truncate(m);
    }
    let mut file = match &opts.checkpoint {
        Some(p) => Some(open_checkpoint(p, spec, &done)?),
        None => None,
    };

    let workers = opts.workers.unwrap_or_else(default_workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<PointRecord>();
    let writer = std::thread::spawn(move || -> Result<Vec<PointRecord>, HarnessError> {
        let mut fresh = Vec::new();
        for r in rx {
            if let Some(f) = file.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&r)?)?;
                f.flush()?;
            }
            fresh.push(r);
        }
        Ok(fresh)
    });
    pool.install(|| {
        todo.par_iter().for_each_with(tx, |tx, pt| {
            // The receiver only hangs up if the writer failed; that error is reported below.
            let _ = tx.send(evaluate_point(spec, &sim, pt));
        })
    });
    let fresh = writer.join().map_err(|_| HarnessError::Checkpoint("writer thread panicked".into()))??;
    for r in fresh {
        done.insert(r.index, r);
    }
    Ok(PhaseGridResult { spec: *spec, records: done.into_values().collect() })
}

const CSV_HEADER: [&str; 12] = [
    "index",
    "m1",
    "m2",
    "g",
    "method",
    "chern_estimate",
    "rounded",
    "direct_gap",
    "confidence",
    "region",
    "error",
    "wall_time",
];

fn opt<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(String::new, ToString::to_string)
}

pub fn write_csv<W: Write>(result: &PhaseGridResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.records {
        w.write_record(&[
            r.index.to_string(),
            r.m1.to_string(),
            r.m2.to_string(),
            r.g.to_string(),
            r.method.name().to_string(),
            opt(&r.chern_estimate),
            opt(&r.rounded),
            r.direct_gap.to_string(),
            opt(&r.confidence),
            opt(&r.region),
            opt(&r.error),
            r.wall_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonResult<'a> {
    schema_version: u32,
    spec: &'a GridSpec,
    records: &'a [PointRecord],
}

pub fn write_json<W: Write>(result: &PhaseGridResult, out: W) -> Result<(), HarnessError> {
    let doc = JsonResult { schema_version: RESULT_SCHEMA_VERSION, spec: &result.spec, records: &result.records };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

/// Gnuplot nonuniform matrix for one value of `g`: the first row holds the
/// column count and the m2 values, each further row an m1 value followed by
/// the rounded Chern numbers (`nan` where missing). Plot with
/// `plot 'file' nonuniform matrix with image`.
pub fn write_gnuplot_matrix<W: Write>(result: &PhaseGridResult, g: f64, mut out: W) -> Result<(), HarnessError> {
    let m1s = result.spec.m1.values();
    let m2s = result.spec.m2.values();
    let by_key: BTreeMap<(usize, usize), Option<i32>> = result
        .records
        .iter()
        .filter(|r| r.g == g)
        .map(|r| {
            let n2 = m2s.len();
            let local = r.index % (m1s.len() * n2);
            ((local / n2, local % n2), r.rounded)
        })
        .collect();
    write!(out, "{}", m2s.len())?;
    for m2 in &m2s {
        write!(out, " {m2}")?;
    }
    writeln!(out)?;
    for (i, m1) in m1s.iter().enumerate() {
        write!(out, "{m1}")?;
        for j in 0..m2s.len() {
            match by_key.get(&(i, j)).copied().flatten() {
                Some(c) => write!(out, " {c}")?,
                None => write!(out, " nan")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parsed nonuniform matrix: `(m1 values, m2 values, rows)`.
pub type GnuplotMatrix = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

pub fn parse_gnuplot_matrix(text: &str) -> Result<GnuplotMatrix, HarnessError> {
    let bad = |m: &str| HarnessError::Config(format!("gnuplot matrix: {m}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<f64> = lines
        .next()
        .ok_or_else(|| bad("empty"))?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| bad("bad header"))?;
    let ncol = *head.first().ok_or_else(|| bad("empty header"))? as usize;
    if head.len() != ncol + 1 {
        return Err(bad("header length does not match column count"));
    }
    let (mut m1s, mut rows) = (Vec::new(), Vec::new());
    for line in lines {
        let v: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| bad("bad row"))?;
        if v.len() != ncol + 1 {
            return Err(bad("row length does not match column count"));
        }
        m1s.push(v[0]);
        rows.push(v[1..].to_vec());
    }
    Ok((m1s, head[1..].to_vec(), rows))
}
