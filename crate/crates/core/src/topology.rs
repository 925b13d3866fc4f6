//! Band topology of the static model.
//!
//! Chern numbers are computed with gauge-invariant link variables on a
//! uniform grid: for every plaquette the product of the four normalized
//! overlaps (or overlap determinants for the occupied pair) is a pure phase,
//! and the phases sum to `2 pi` times an integer. Orientation is chosen so
//! that a half-BHZ layer with `-2 < m < 0` contributes `-1` from its lower
//! band, which is the convention the pumping rates follow.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::model::{bloch_hamiltonian, BZPoint, ModelParams};
use crate::smallmat::{hermitian_eig, raw_inner, tol, BandSolution, Complex, StateVector4};

/// Default points per axis for Chern and gap evaluations.
pub const DEFAULT_GRID: usize = 64;
/// Default tolerance on the cone functions for labelling a point as boundary.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-3;

/// Uniform periodic `n x n` grid over the Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BZGrid {
    n: usize,
}

impl BZGrid {
    pub fn new(n: usize) -> Result<Self, TopologyError> {
        if n < 8 {
            return Err(TopologyError::GridTooSmall(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `k = (2 pi i / n - pi, 2 pi j / n - pi)`.
    pub fn point(&self, i: usize, j: usize) -> BZPoint {
        let h = 2.0 * PI / self.n as f64;
        BZPoint::new(h * i as f64 - PI, h * j as f64 - PI)
    }

    fn flat(&self, i: usize, j: usize) -> usize {
        (i % self.n) * self.n + (j % self.n)
    }
}

impl Default for BZGrid {
    fn default() -> Self {
        Self { n: DEFAULT_GRID }
    }
}

/// Eigen-decompositions of `h(k)` at every grid point, row-major in `(i, j)`.
pub fn solve_grid(p: &ModelParams, grid: BZGrid) -> Vec<BandSolution> {
    let n = grid.n;
    (0..n * n)
        .into_par_iter()
        .map(|idx| hermitian_eig(&bloch_hamiltonian(p, grid.point(idx / n, idx % n))))
        .collect()
}

/// Berry flux per plaquette of one band.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    /// 1-based band index, ascending energy.
    pub band: usize,
    pub grid: BZGrid,
    /// Flux through the plaquette whose lower-left corner is `(i, j)`, at `values[i * n + j]`.
    pub values: Vec<f64>,
}

impl CurvatureField {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Plaquette fluxes from any frame of `K` vectors per grid point. `K = 1`
/// gives the single-band (abelian) link, `K = 2` the determinant link.
pub fn plaquette_fluxes<const K: usize>(grid: BZGrid, frames: &[[StateVector4; K]]) -> Vec<f64> {
    let n = grid.n;
    assert_eq!(frames.len(), n * n, "one frame per grid point");
    let link = |a: usize, b: usize| -> Complex {
        let z = overlap_det(&frames[a], &frames[b]);
        let r = z.norm();
        if r == 0.0 {
            Complex::new(1.0, 0.0)
        } else {
            z / r
        }
    };
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let k00 = grid.flat(i, j);
            let k10 = grid.flat(i + 1, j);
            let k11 = grid.flat(i + 1, j + 1);
            let k01 = grid.flat(i, j + 1);
            // Loop k -> k + y -> k + x + y -> k + x -> k.
            let w = link(k00, k01) * link(k01, k11) * link(k11, k10) * link(k10, k00);
            w.arg()
        })
        .collect()
}

fn overlap_det<const K: usize>(a: &[StateVector4; K], b: &[StateVector4; K]) -> Complex {
    match K {
        1 => raw_inner(a[0].amplitudes(), b[0].amplitudes()),
        2 => {
            let m00 = raw_inner(a[0].amplitudes(), b[0].amplitudes());
            let m01 = raw_inner(a[0].amplitudes(), b[1].amplitudes());
            let m10 = raw_inner(a[1].amplitudes(), b[0].amplitudes());
            let m11 = raw_inner(a[1].amplitudes(), b[1].amplitudes());
            m00 * m11 - m01 * m10
        }
        _ => unimplemented!("frames wider than two bands are not used"),
    }
}

/// Integer Chern number from plaquette fluxes.
pub fn chern_from_fluxes(fluxes: &[f64]) -> i32 {
    (fluxes.iter().sum::<f64>() / (2.0 * PI)).round() as i32
}

/// Gauge-invariant Chern number from per-point frames.
pub fn chern_from_frames<const K: usize>(grid: BZGrid, frames: &[[StateVector4; K]]) -> i32 {
    chern_from_fluxes(&plaquette_fluxes(grid, frames))
}

fn check_band(band: usize) -> Result<usize, TopologyError> {
    if !(1..=4).contains(&band) {
        return Err(crate::error::ModelError::InvalidBand(band).into());
    }
    Ok(band - 1)
}

fn band_isolation(sols: &[BandSolution], grid: BZGrid, b: usize) -> Result<(), TopologyError> {
    let mut worst = (f64::INFINITY, 0usize);
    for (idx, s) in sols.iter().enumerate() {
        let e = &s.eigenvalues;
        let mut sep = f64::INFINITY;
        if b > 0 {
            sep = sep.min(e[b] - e[b - 1]);
        }
        if b < 3 {
            sep = sep.min(e[b + 1] - e[b]);
        }
        if sep < worst.0 {
            worst = (sep, idx);
        }
    }
    if worst.0 <= tol::DEGENERACY {
        let k = grid.point(worst.1 / grid.n, worst.1 % grid.n);
        return Err(TopologyError::DegenerateBand { band: b + 1, kx: k.kx, ky: k.ky, gap: worst.0 });
    }
    Ok(())
}

/// Berry flux field of a single band.
pub fn curvature_field(p: &ModelParams, grid: BZGrid, band: usize) -> Result<CurvatureField, TopologyError> {
    let b = check_band(band)?;
    let sols = solve_grid(p, grid);
    band_isolation(&sols, grid, b)?;
    let frames: Vec<[StateVector4; 1]> = sols.iter().map(|s| [s.eigenvectors[b]]).collect();
    Ok(CurvatureField { band, grid, values: plaquette_fluxes(grid, &frames) })
}

/// Chern number of one band (1-based, ascending energy).
pub fn chern_band(p: &ModelParams, grid: BZGrid, band: usize) -> Result<i32, TopologyError> {
    Ok(chern_from_fluxes(&curvature_field(p, grid, band)?.values))
}

/// Chern numbers of all four bands from one grid solve.
pub fn chern_all_bands(p: &ModelParams, grid: BZGrid) -> Result<[i32; 4], TopologyError> {
    let sols = solve_grid(p, grid);
    let mut out = [0; 4];
    for (b, slot) in out.iter_mut().enumerate() {
        band_isolation(&sols, grid, b)?;
        let frames: Vec<[StateVector4; 1]> = sols.iter().map(|s| [s.eigenvectors[b]]).collect();
        *slot = chern_from_frames(grid, &frames);
    }
    Ok(out)
}

/// Total Chern number `C1 + C2` of the two lowest bands. Touchings between
/// bands 1 and 2 are allowed; the gap to band 3 must stay open.
pub fn chern_occupied(p: &ModelParams, grid: BZGrid) -> Result<i32, TopologyError> {
    let sols = solve_grid(p, grid);
    chern_occupied_from(&sols, grid)
}

pub(crate) fn chern_occupied_from(sols: &[BandSolution], grid: BZGrid) -> Result<i32, TopologyError> {
    let (gap, idx) = sols
        .iter()
        .enumerate()
        .map(|(i, s)| (s.eigenvalues[2] - s.eigenvalues[1], i))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    if gap <= tol::DEGENERACY {
        let k = grid.point(idx / grid.n, idx % grid.n);
        return Err(TopologyError::Gapless { kx: k.kx, ky: k.ky, gap });
    }
    let frames: Vec<[StateVector4; 2]> = sols.iter().map(|s| [s.eigenvectors[0], s.eigenvectors[1]]).collect();
    Ok(chern_from_frames(grid, &frames))
}

/// Pair of adjacent bands (1-based lower index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandPair(pub usize, pub usize);

/// Direct gap between bands 2 and 3 and all near-touchings of adjacent bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Minimum of `E3(k) - E2(k)`, refined by a local search from the best grid point.
    pub direct_gap: f64,
    pub argmin_k: BZPoint,
    /// Minimum over the raw grid, before refinement.
    pub grid_gap: f64,
    pub band_touchings: Vec<(BandPair, BZPoint)>,
}

impl GapReport {
    pub fn is_gapless(&self, touch_tol: f64) -> bool {
        self.direct_gap < touch_tol
    }
}

fn local_gap(p: &ModelParams, kx: f64, ky: f64, lower: usize) -> f64 {
    let e = hermitian_eig(&bloch_hamiltonian(p, BZPoint::new(kx, ky))).eigenvalues;
    e[lower + 1] - e[lower]
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64, iters: usize) -> (f64, f64) {
    let r = crate::model::GOLDEN_RATIO;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Refines a grid minimum of the `lower`/`lower+1` separation by alternating
/// line searches along both axes within one grid cell.
fn refine_gap(p: &ModelParams, start: BZPoint, h: f64, lower: usize) -> (f64, BZPoint) {
    let (mut kx, mut ky) = (start.kx, start.ky);
    let mut best = local_gap(p, kx, ky, lower);
    let mut span = h;
    for _ in 0..4 {
        let (x, fx) = golden_min(kx - span, kx + span, |x| local_gap(p, x, ky, lower), 40);
        if fx < best {
            best = fx;
            kx = x;
        }
        let (y, fy) = golden_min(ky - span, ky + span, |y| local_gap(p, kx, y, lower), 40);
        if fy < best {
            best = fy;
            ky = y;
        }
        span *= 0.5;
    }
    (best, BZPoint::new(kx, ky))
}

/// Scan the grid for the direct gap and band touchings below `touch_tol`.
pub fn gap_scan_with(p: &ModelParams, grid: BZGrid, touch_tol: f64) -> GapReport {
    let sols = solve_grid(p, grid);
    gap_scan_from(p, &sols, grid, touch_tol)
}

/// [`gap_scan_with`] at the default touching tolerance.
pub fn gap_scan(p: &ModelParams, grid: BZGrid) -> GapReport {
    gap_scan_with(p, grid, tol::DEGENERACY)
}

pub(crate) fn gap_scan_from(p: &ModelParams, sols: &[BandSolution], grid: BZGrid, touch_tol: f64) -> GapReport {
    let n = grid.n;
    let h = 2.0 * PI / n as f64;
    let mut touchings = Vec::new();
    let mut result = None;
    for lower in 0..3 {
        let (gmin, idx) = sols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.eigenvalues[lower + 1] - s.eigenvalues[lower], i))
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
        let start = grid.point(idx / n, idx % n);
        let (refined, k) = if gmin < touch_tol { (gmin, start) } else { refine_gap(p, start, h, lower) };
        for (i, s) in sols.iter().enumerate() {
            if s.eigenvalues[lower + 1] - s.eigenvalues[lower] < touch_tol {
                touchings.push((BandPair(lower + 1, lower + 2), grid.point(i / n, i % n)));
            }
        }
        if refined < touch_tol && gmin >= touch_tol {
            touchings.push((BandPair(lower + 1, lower + 2), k));
        }
        if lower == 1 {
            result = Some((refined.max(0.0), k, gmin));
        }
    }
    let (direct_gap, argmin_k, grid_gap) = result.expect("middle pair evaluated");
    GapReport { direct_gap, argmin_k, grid_gap, band_touchings: touchings }
}

/// Values of the three cone functions: red `m1 m2 - g^2` (Dirac point at
/// `(pi, 0)`), green `(m1-2)(m2-2) - g^2` (at `(0, 0)`), purple
/// `(m1+2)(m2+2) - g^2` (at `(pi, pi)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeValues {
    pub red: f64,
    pub green: f64,
    pub purple: f64,
}

impl ConeValues {
    pub fn min_abs(&self) -> f64 {
        self.red.abs().min(self.green.abs()).min(self.purple.abs())
    }
}

pub fn phase_boundary_distance(p: &ModelParams) -> ConeValues {
    let g2 = p.g * p.g;
    ConeValues {
        red: p.m1 * p.m2 - g2,
        green: (p.m1 - 2.0) * (p.m2 - 2.0) - g2,
        purple: (p.m1 + 2.0) * (p.m2 + 2.0) - g2,
    }
}

/// Named regions of the `(m1, m2, g)` parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Inner spindle minus the two red spindles.
    R0Rest,
    R1,
    R2,
    R3,
    LeftPurple,
    LeftRedPurple,
    LeftRedGreen,
    RightRedPurple,
    RightRedGreen,
    RightGreen,
    Boundary,
}

impl Region {
    /// Chern number of the region; `None` on a boundary.
    pub fn chern(self) -> Option<i32> {
        use Region::*;
        match self {
            R0Rest | R3 | LeftPurple | RightGreen => Some(0),
            R1 => Some(-2),
            R2 => Some(2),
            LeftRedPurple | RightRedPurple => Some(-1),
            LeftRedGreen | RightRedGreen => Some(1),
            Boundary => None,
        }
    }

    pub fn name(self) -> &'static str {
        use Region::*;
        match self {
            R0Rest => "R0\\(R1uR2)",
            R1 => "R1",
            R2 => "R2",
            R3 => "R3",
            LeftPurple => "R_L,p",
            LeftRedPurple => "R_L,rp",
            LeftRedGreen => "R_L,rg",
            RightRedPurple => "R_R,rp",
            RightRedGreen => "R_R,rg",
            RightGreen => "R_R,g",
            Boundary => "Boundary",
        }
    }
}

/// Region label and its Chern number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub region: Region,
    pub chern: Option<i32>,
}

impl From<Region> for PhaseLabel {
    fn from(region: Region) -> Self {
        Self { region, chern: region.chern() }
    }
}

/// Analytic region classifier.
///
/// Points within `boundary_tol` of any cone, and points on the `m1 = m2`
/// plane where a numerical gap scan finds the bands touching, are labelled
/// [`Region::Boundary`].
pub fn classify_phase(p: &ModelParams, boundary_tol: f64) -> PhaseLabel {
    let f = phase_boundary_distance(p);
    if f.min_abs() < boundary_tol {
        return Region::Boundary.into();
    }
    if (p.m1 - p.m2).abs() < boundary_tol {
        let report = gap_scan(p, BZGrid::default());
        if report.is_gapless(tol::DEGENERACY) {
            return Region::Boundary.into();
        }
    }
    classify_region(p.m1, p.m2, f).into()
}

fn classify_region(m1: f64, m2: f64, f: ConeValues) -> Region {
    let in_red_neg = m1 < 0.0 && m2 < 0.0 && f.red > 0.0;
    let in_red_pos = m1 > 0.0 && m2 > 0.0 && f.red > 0.0;
    let in_green_left = m1 < 2.0 && m2 < 2.0 && f.green > 0.0;
    let in_green_right = m1 > 2.0 && m2 > 2.0 && f.green > 0.0;
    let in_purple_right = m1 > -2.0 && m2 > -2.0 && f.purple > 0.0;
    let in_purple_left = m1 < -2.0 && m2 < -2.0 && f.purple > 0.0;
    let r0 = in_purple_right && in_green_left;

    if in_green_right {
        Region::RightGreen
    } else if in_purple_left {
        Region::LeftPurple
    } else if r0 && in_red_neg {
        Region::R1
    } else if r0 && in_red_pos {
        Region::R2
    } else if r0 {
        Region::R0Rest
    } else if in_red_neg {
        Region::LeftRedPurple
    } else if in_red_pos {
        Region::RightRedGreen
    } else if in_green_left && !in_purple_right {
        Region::LeftRedGreen
    } else if in_purple_right && !in_red_pos && !in_green_left {
        Region::RightRedPurple
    } else {
        Region::R3
    }
}
