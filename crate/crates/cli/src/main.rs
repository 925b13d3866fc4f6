//! `floquet-chern`: command-line driver for the bilayer Floquet Chern model.
//!
//! Exit codes: 0 success, 1 usage error, 2 fatal error.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use floquet_core::harness::{default_workers, write_csv, write_gnuplot_matrix, write_json, WORKERS_ENV};
use floquet_core::model::FloquetWindow;
use floquet_core::topology::{
    chern_all_bands, chern_from_frames, gap_scan, solve_grid, DEFAULT_BOUNDARY_TOL, DEFAULT_GRID,
};
use floquet_core::{
    bloch_hamiltonian, chern_occupied, classify_phase, estimate_chern_pumping, floquet_lattice_hamiltonian,
    hermitian_eig, run_sweep, two_step_protocol, BZGrid, BZPoint, Complex, DriveConfig, GridSpec, ModelParams,
    OscillationConfig, PhaseCorrection, SimConfig, StateVector4, SweepOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "floquet-chern", version, about = "Bilayer half-BHZ Chern insulator on a synthetic Floquet lattice")]
struct Cli {
    /// Sweep specification (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Seed for randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Copy)]
struct PointArgs {
    #[arg(long, allow_hyphen_values = true)]
    m1: f64,
    #[arg(long, allow_hyphen_values = true)]
    m2: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    g: f64,
}

impl PointArgs {
    fn bare(&self) -> Result<ModelParams> {
        ModelParams::bare(self.m1, self.m2, self.g).map_err(usage)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct DriveArgs {
    /// Drive strength; defaults to 4 for pumping and spectra, 2 for oscillation.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    omega1: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    phi1: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    phi2: f64,
}

impl DriveArgs {
    fn resolve(&self, p: &PointArgs, default_eta: f64) -> Result<(ModelParams, DriveConfig)> {
        let params = ModelParams::new(p.m1, p.m2, p.g, self.eta.unwrap_or(default_eta)).map_err(usage)?;
        let drive = DriveConfig::golden(self.omega1).and_then(|d| d.with_phases(self.phi1, self.phi2)).map_err(usage)?;
        Ok((params, drive))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bloch spectrum along Gamma-X-M-Gamma.
    Bands {
        #[command(flatten)]
        point: PointArgs,
        /// Samples per path segment.
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Direct gap and band touchings on a Brillouin-zone grid.
    Gap {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Lattice Chern numbers and analytic phase label for one point.
    Chern {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Recompute after random eigenvector rephasing (uses --seed).
        #[arg(long)]
        gauge_check: bool,
    },
    /// Chern number from quantized energy pumping.
    Pump {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long, default_value_t = 2e4)]
        total_time: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 100)]
        stride: u64,
        #[arg(long, default_value_t = 0.05)]
        warmup: f64,
    },
    /// |C| from the two-step topological-oscillation protocol.
    Oscillate {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        drive: DriveArgs,
        /// Defaults to 3 pi / omega_T.
        #[arg(long)]
        total_time: Option<f64>,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 100)]
        stride: u64,
        /// Remove each band's dynamical phase before forming the overlap.
        #[arg(long)]
        correct_dynamical_phase: bool,
    },
    /// Phase-diagram sweep from --config.
    Sweep {
        /// Checkpoint file; defaults to <out>/sweep.ckpt when --out is set.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after evaluating this many new points.
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Quasi-energies of the truncated Floquet-lattice Hamiltonian.
    FloquetSpectrum {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long, default_value_t = 6)]
        radius: usize,
        #[arg(long, default_value_t = 2)]
        edge_margin: usize,
        #[arg(long, default_value_t = 1e-2)]
        edge_threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// One-row CSV from a flat JSON object.
fn print_flat_csv(fields: &[(&str, String)]) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", fields.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(","))?;
    writeln!(out, "{}", fields.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(","))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bands { point, samples } => bands(cli, point, *samples),
        Command::Gap { point, grid } => gap(cli, point, *grid),
        Command::Chern { point, grid, gauge_check } => chern(cli, point, *grid, *gauge_check),
        Command::Pump { point, drive, total_time, dt, stride, warmup } => {
            pump(cli, point, drive, SimConfig::new(*total_time, *dt, *stride).map_err(usage)?, *warmup)
        }
        Command::Oscillate { point, drive, total_time, dt, stride, correct_dynamical_phase } => {
            oscillate(cli, point, drive, *total_time, *dt, *stride, *correct_dynamical_phase)
        }
        Command::Sweep { checkpoint, max_points } => sweep(cli, checkpoint.clone(), *max_points),
        Command::FloquetSpectrum { point, drive, radius, edge_margin, edge_threshold } => {
            floquet_spectrum(cli, point, drive, *radius, *edge_margin, *edge_threshold)
        }
    }
}

fn bands(cli: &Cli, point: &PointArgs, samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let p = point.bare()?;
    let corners = [(0.0, 0.0), (PI, 0.0), (PI, PI), (0.0, 0.0)];
    let mut rows = Vec::new();
    let mut s = 0.0;
    for (seg, w) in corners.windows(2).enumerate() {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let len = (x1 - x0).hypot(y1 - y0);
        for i in 0..=samples {
            if seg > 0 && i == 0 {
                continue;
            }
            let f = i as f64 / samples as f64;
            let (kx, ky) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let e = hermitian_eig(&bloch_hamiltonian(&p, BZPoint::new(kx, ky))).eigenvalues;
            rows.push((s + f * len, kx, ky, e));
        }
        s += len;
    }
    let write = |w: &mut dyn Write| -> Result<()> {
        writeln!(w, "s,kx,ky,E1,E2,E3,E4")?;
        for (s, kx, ky, e) in &rows {
            writeln!(w, "{s},{kx},{ky},{},{},{},{}", e[0], e[1], e[2], e[3])?;
        }
        Ok(())
    };
    match cli.format {
        Some(Format::Json) => {
            let v: Vec<_> = rows.iter().map(|(s, kx, ky, e)| json!({"s": s, "kx": kx, "ky": ky, "energies": e})).collect();
            print_json(&json!(v))?;
        }
        _ => write(&mut io::stdout().lock())?,
    }
    if let Some(dir) = &cli.out {
        let mut f = out_file(dir, "bands.csv")?;
        write(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn grid_arg(n: usize) -> Result<BZGrid> {
    BZGrid::new(n).map_err(usage)
}

fn gap(cli: &Cli, point: &PointArgs, n: usize) -> Result<()> {
    let report = gap_scan(&point.bare()?, grid_arg(n)?);
    match cli.format {
        Some(Format::Csv) => print_flat_csv(&[
            ("direct_gap", report.direct_gap.to_string()),
            ("kx", report.argmin_k.kx.to_string()),
            ("ky", report.argmin_k.ky.to_string()),
            ("grid_gap", report.grid_gap.to_string()),
            ("band_touchings", report.band_touchings.len().to_string()),
        ]),
        _ => print_json(&serde_json::to_value(&report)?),
    }
}

fn chern(cli: &Cli, point: &PointArgs, n: usize, gauge_check: bool) -> Result<()> {
    let p = point.bare()?;
    let grid = grid_arg(n)?;
    let occupied = chern_occupied(&p, grid)?;
    let bands = chern_all_bands(&p, grid).ok();
    let label = classify_phase(&p, DEFAULT_BOUNDARY_TOL);
    let gauge = if gauge_check || cli.seed.is_some() {
        let seed = cli.seed.unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<[StateVector4; 2]> = solve_grid(&p, grid)
            .iter()
            .map(|s| {
                let mut ph = || Complex::from_polar(1.0, rng.gen_range(-PI..PI));
                [s.eigenvectors[0].scale_phase(ph()), s.eigenvectors[1].scale_phase(ph())]
            })
            .collect();
        let rephased = chern_from_frames(grid, &frames);
        Some(json!({"seed": seed, "rephased_chern": rephased, "consistent": rephased == occupied}))
    } else {
        None
    };
    match cli.format {
        Some(Format::Csv) => print_flat_csv(&[
            ("m1", p.m1.to_string()),
            ("m2", p.m2.to_string()),
            ("g", p.g.to_string()),
            ("occupied_chern", occupied.to_string()),
            ("region", label.region.name().to_string()),
            ("classifier_chern", label.chern.map_or_else(String::new, |c| c.to_string())),
        ])?,
        _ => print_json(&json!({
            "m1": p.m1, "m2": p.m2, "g": p.g,
            "occupied_chern": occupied,
            "band_cherns": bands,
            "region": label.region.name(),
            "classifier_chern": label.chern,
            "grid": n,
            "gauge_check": gauge,
        }))?,
    }
    if let Some(g) = &gauge {
        if g["consistent"] != json!(true) {
            bail!("Chern number changed under random rephasing");
        }
    }
    Ok(())
}

fn pump(cli: &Cli, point: &PointArgs, drive: &DriveArgs, sim: SimConfig, warmup: f64) -> Result<()> {
    let (p, d) = drive.resolve(point, 4.0)?;
    let out = estimate_chern_pumping(&p, &d, &sim, warmup)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let summary = json!({
        "params": p, "drive": d, "sim": sim,
        "estimate": out.estimate,
        "adiabaticity": out.adiabaticity,
        "driving_ratio": out.driving_ratio,
        "low_confidence": out.low_confidence,
        "warnings": out.warnings,
    });
    match cli.format {
        Some(Format::Csv) => out.trace.write_csv(io::stdout().lock())?,
        _ => print_json(&summary)?,
    }
    if let Some(dir) = &cli.out {
        let mut f = out_file(dir, "pump_trace.csv")?;
        out.trace.write_csv(&mut f)?;
        f.flush()?;
        let mut f = out_file(dir, "pump.json")?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.flush()?;
    }
    Ok(())
}

fn oscillate(
    cli: &Cli,
    point: &PointArgs,
    drive: &DriveArgs,
    total_time: Option<f64>,
    dt: f64,
    stride: u64,
    correct: bool,
) -> Result<()> {
    let (p, d) = drive.resolve(point, 2.0)?;
    let correction = if correct { PhaseCorrection::Dynamical } else { PhaseCorrection::None };
    let osc = OscillationConfig::default().with_correction(correction);
    let sim = match total_time {
        Some(t) => SimConfig::new(t, dt, stride).map_err(usage)?,
        None => osc.default_sim(&d, dt, stride)?,
    };
    let out = two_step_protocol(&p, &d, &osc, &sim)?;
    let summary = json!({"params": p, "drive": d, "sim": sim, "config": osc, "verdict": out.verdict});
    match cli.format {
        Some(Format::Csv) => out.step1_trace.write_csv(io::stdout().lock())?,
        _ => print_json(&summary)?,
    }
    if let Some(dir) = &cli.out {
        let mut f = out_file(dir, "overlap_step1.csv")?;
        out.step1_trace.write_csv(&mut f)?;
        f.flush()?;
        if let Some(t) = &out.step2_trace {
            let mut f = out_file(dir, "overlap_step2.csv")?;
            t.write_csv(&mut f)?;
            f.flush()?;
        }
        let mut f = out_file(dir, "oscillation.json")?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.flush()?;
    }
    Ok(())
}

fn sweep(cli: &Cli, checkpoint: Option<PathBuf>, max_points: Option<usize>) -> Result<()> {
    let Some(cfg) = &cli.config else {
        return Err(usage("sweep requires --config <file>"));
    };
    let spec = GridSpec::load(cfg).with_context(|| format!("loading {}", cfg.display()))?;
    let checkpoint = checkpoint.or_else(|| cli.out.as_ref().map(|d| d.join("sweep.ckpt")));
    if let Some(parent) = checkpoint.as_ref().and_then(|c| c.parent()) {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let opts = SweepOptions { workers: Some(cli.workers.unwrap_or_else(default_workers)), checkpoint, max_points };
    let result = run_sweep(&spec, &opts)?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} of {} points done, {failed} with errors",
        result.records.len(),
        spec.points().len()
    );
    match &cli.out {
        Some(dir) => {
            let mut f = out_file(dir, "sweep.csv")?;
            write_csv(&result, &mut f)?;
            f.flush()?;
            let mut f = out_file(dir, "sweep.json")?;
            write_json(&result, &mut f)?;
            f.flush()?;
            for (k, g) in spec.g.values().into_iter().enumerate() {
                let mut f = out_file(dir, &format!("sweep_matrix_{k}.dat"))?;
                writeln!(f, "# g = {g}; rows m1, columns m2")?;
                write_gnuplot_matrix(&result, g, &mut f)?;
                f.flush()?;
            }
        }
        None => match cli.format {
            Some(Format::Json) => {
                write_json(&result, io::stdout().lock())?;
                println!();
            }
            _ => write_csv(&result, io::stdout().lock())?,
        },
    }
    Ok(())
}

fn floquet_spectrum(
    cli: &Cli,
    point: &PointArgs,
    drive: &DriveArgs,
    radius: usize,
    edge_margin: usize,
    edge_threshold: f64,
) -> Result<()> {
    let (p, d) = drive.resolve(point, 4.0)?;
    let window = FloquetWindow::new(radius).map_err(usage)?;
    let spectrum = floquet_lattice_hamiltonian(&p, &d, window).eigen();
    let report = spectrum.ladder_report(&d, edge_margin, edge_threshold);
    let edge = spectrum.edge_weights(edge_margin);
    let write = |w: &mut dyn Write| -> Result<()> {
        writeln!(w, "index,energy,edge_weight")?;
        for (i, (e, ew)) in spectrum.energies.iter().zip(&edge).enumerate() {
            writeln!(w, "{i},{e},{ew}")?;
        }
        Ok(())
    };
    match cli.format {
        Some(Format::Csv) => write(&mut io::stdout().lock())?,
        _ => print_json(&json!({"params": p, "drive": d, "radius": radius, "ladder": report}))?,
    }
    if let Some(dir) = &cli.out {
        let mut f = out_file(dir, "floquet_spectrum.csv")?;
        write(&mut f)?;
        f.flush()?;
    }
    Ok(())
}
