//! Dense complex linear algebra for 4-level systems.
//!
//! Everything here is a plain value type backed by fixed-size arrays. The
//! eigensolver is a cyclic complex Jacobi iteration with a fixed sweep order,
//! so identical inputs always produce bit-identical outputs.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SmallMatError;

/// Complex scalar used throughout the crate.
pub type Complex = Complex64;

/// Numerical tolerances shared by every module.
pub mod tol {
    /// Maximum `|H_ij - conj(H_ji)|` accepted for a Hermitian operator.
    pub const HERMITIAN: f64 = 1e-12;
    /// Maximum entry of `U^dagger U - I` accepted for a unitary.
    pub const UNITARY: f64 = 1e-10;
    /// Maximum `| ||psi|| - 1 |` accepted for a state vector.
    pub const NORM: f64 = 1e-10;
    /// Maximum imaginary part tolerated in an expectation value.
    pub const EXPECTATION_IMAG: f64 = 1e-10;
    /// Eigenvalue separation below which two bands count as touching.
    pub const DEGENERACY: f64 = 1e-6;
}

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

const MAX_JACOBI_SWEEPS: usize = 64;

/// Raw 4x4 complex matrix in row-major order.
pub type Entries4 = [[Complex; 4]; 4];

/// Pauli matrices, `[sigma_0, sigma_x, sigma_y, sigma_z]`.
pub const PAULI: [[[Complex; 2]; 2]; 4] = [
    [[ONE, ZERO], [ZERO, ONE]],
    [[ZERO, ONE], [ONE, ZERO]],
    [[ZERO, Complex::new(0.0, -1.0)], [Complex::new(0.0, 1.0), ZERO]],
    [[ONE, ZERO], [ZERO, Complex::new(-1.0, 0.0)]],
];

/// Index into [`PAULI`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Kronecker product `a (x) b` of two Pauli matrices, `a` acting on the outer
/// (layer) factor and `b` on the inner (orbital) factor.
pub fn kron(a: Pauli, b: Pauli) -> Entries4 {
    let pa = &PAULI[a as usize];
    let pb = &PAULI[b as usize];
    let mut out = [[ZERO; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = pa[i / 2][j / 2] * pb[i % 2][j % 2];
        }
    }
    out
}

fn zero_entries() -> Entries4 {
    [[ZERO; 4]; 4]
}

fn identity_entries() -> Entries4 {
    let mut m = zero_entries();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

fn matmul(a: &Entries4, b: &Entries4) -> Entries4 {
    let mut out = zero_entries();
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn adjoint(a: &Entries4) -> Entries4 {
    let mut out = zero_entries();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

/// Frobenius norm of a raw matrix.
pub fn frobenius(a: &Entries4) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn max_hermitian_defect(a: &Entries4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in i..4 {
            worst = worst.max((a[i][j] - a[j][i].conj()).norm());
        }
    }
    worst
}

/// A 4x4 complex Hermitian operator.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermitianMatrix4 {
    entries: Entries4,
}

impl HermitianMatrix4 {
    /// Validates Hermiticity within [`tol::HERMITIAN`].
    pub fn new(entries: Entries4) -> Result<Self, SmallMatError> {
        if entries.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SmallMatError::NonFinite);
        }
        let defect = max_hermitian_defect(&entries);
        if defect > tol::HERMITIAN {
            return Err(SmallMatError::NotHermitian { defect });
        }
        Ok(Self { entries })
    }

    /// Wraps entries that are Hermitian by construction. Debug builds still
    /// check the invariant.
    pub(crate) fn from_entries_unchecked(entries: Entries4) -> Self {
        debug_assert!(max_hermitian_defect(&entries) <= tol::HERMITIAN);
        Self { entries }
    }

    pub fn zero() -> Self {
        Self { entries: zero_entries() }
    }

    pub fn identity() -> Self {
        Self { entries: identity_entries() }
    }

    /// Real diagonal matrix.
    pub fn diagonal(d: [f64; 4]) -> Self {
        let mut m = zero_entries();
        for i in 0..4 {
            m[i][i] = Complex::new(d[i], 0.0);
        }
        Self { entries: m }
    }

    /// `sigma_a (x) sigma_b`.
    pub fn pauli_product(a: Pauli, b: Pauli) -> Self {
        Self { entries: kron(a, b) }
    }

    pub fn entries(&self) -> &Entries4 {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.entries[i][j]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.entries;
        m.iter_mut().flatten().for_each(|z| *z *= s);
        Self { entries: m }
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.entries[i][i].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `H psi` without normalization.
    pub fn mul_vec(&self, v: &[Complex; 4]) -> [Complex; 4] {
        let mut out = [ZERO; 4];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..4 {
                *o += self.entries[i][j] * v[j];
            }
        }
        out
    }
}

impl Add for HermitianMatrix4 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut m = self.entries;
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += rhs.entries[i][j];
            }
        }
        Self { entries: m }
    }
}

impl Sub for HermitianMatrix4 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(-1.0)
    }
}

impl Mul<HermitianMatrix4> for f64 {
    type Output = HermitianMatrix4;
    fn mul(self, rhs: HermitianMatrix4) -> HermitianMatrix4 {
        rhs.scale(self)
    }
}

impl fmt::Debug for HermitianMatrix4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter()).finish()
    }
}

/// A 4x4 unitary operator.
#[derive(Clone, Copy, PartialEq)]
pub struct UnitaryMatrix4 {
    entries: Entries4,
}

impl UnitaryMatrix4 {
    pub fn new(entries: Entries4) -> Result<Self, SmallMatError> {
        let u = Self { entries };
        let defect = u.unitarity_defect();
        if defect > tol::UNITARY {
            return Err(SmallMatError::NotUnitary { defect });
        }
        Ok(u)
    }

    pub fn identity() -> Self {
        Self { entries: identity_entries() }
    }

    pub fn entries(&self) -> &Entries4 {
        &self.entries
    }

    /// Largest entry magnitude of `U^dagger U - I`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = matmul(&adjoint(&self.entries), &self.entries);
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((p[i][j] - target).norm());
            }
        }
        worst
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { entries: matmul(&self.entries, &other.entries) }
    }

    pub fn adjoint(&self) -> Self {
        Self { entries: adjoint(&self.entries) }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for UnitaryMatrix4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter()).finish()
    }
}

/// Normalized 4-component state.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct StateVector4 {
    amplitudes: [Complex; 4],
}

impl StateVector4 {
    /// Checks the norm against [`tol::NORM`].
    pub fn new(amplitudes: [Complex; 4]) -> Result<Self, SmallMatError> {
        let s = Self { amplitudes };
        let norm = s.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol::NORM {
            return Err(SmallMatError::NotNormalized { norm });
        }
        Ok(s)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: [Complex; 4]) -> Result<Self, SmallMatError> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(SmallMatError::NotNormalized { norm });
        }
        Ok(Self { amplitudes: amplitudes.map(|z| z / norm) })
    }

    /// Standard basis vector `e_i` (0-based).
    pub fn basis(i: usize) -> Self {
        let mut a = [ZERO; 4];
        a[i] = ONE;
        Self { amplitudes: a }
    }

    /// Amplitudes that are unit-norm up to accumulated rounding. Used by the
    /// propagator, whose drift is monitored separately.
    pub(crate) fn from_raw(amplitudes: [Complex; 4]) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex; 4] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale_phase(&self, phase: Complex) -> Self {
        Self { amplitudes: self.amplitudes.map(|z| z * phase) }
    }
}

/// `<psi|phi>`, antilinear in the first argument.
pub fn inner(psi: &StateVector4, phi: &StateVector4) -> Complex {
    raw_inner(&psi.amplitudes, &phi.amplitudes)
}

#[inline]
pub(crate) fn raw_inner(a: &[Complex; 4], b: &[Complex; 4]) -> Complex {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2] + a[3].conj() * b[3]
}

/// `U psi`.
pub fn apply(u: &UnitaryMatrix4, psi: &StateVector4) -> StateVector4 {
    let mut out = [ZERO; 4];
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..4 {
            *o += u.entries[i][j] * psi.amplitudes[j];
        }
    }
    StateVector4 { amplitudes: out }
}

/// `<psi|H|psi>`.
pub fn expectation(psi: &StateVector4, h: &HermitianMatrix4) -> f64 {
    let z = raw_inner(&psi.amplitudes, &h.mul_vec(&psi.amplitudes));
    debug_assert!(
        z.im.abs() <= tol::EXPECTATION_IMAG * (1.0 + h.frobenius_norm()),
        "expectation of Hermitian operator has imaginary part {}",
        z.im
    );
    z.re
}

/// Spectral decomposition, eigenvalues ascending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSolution {
    pub eigenvalues: [f64; 4],
    pub eigenvectors: [StateVector4; 4],
}

impl BandSolution {
    /// `sum_i lambda_i v_i v_i^dagger`.
    pub fn reconstruct(&self) -> Entries4 {
        let mut out = zero_entries();
        for (lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let a = v.amplitudes();
            for i in 0..4 {
                for j in 0..4 {
                    out[i][j] += a[i] * a[j].conj() * *lam;
                }
            }
        }
        out
    }

    /// `exp(-i s H) psi` using this decomposition.
    #[inline]
    pub fn propagate(&self, s: f64, psi: &[Complex; 4]) -> [Complex; 4] {
        let mut out = [ZERO; 4];
        for (lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let c = raw_inner(v.amplitudes(), psi) * Complex::from_polar(1.0, -lam * s);
            let a = v.amplitudes();
            out[0] += a[0] * c;
            out[1] += a[1] * c;
            out[2] += a[2] * c;
            out[3] += a[3] * c;
        }
        out
    }
}

/// Full eigendecomposition of a Hermitian 4x4 matrix.
///
/// Eigenvalues come out ascending. Each eigenvector is rephased so that its
/// largest-magnitude component (first one on ties) is real and positive.
pub fn hermitian_eig(h: &HermitianMatrix4) -> BandSolution {
    let mut a = h.entries;
    for i in 0..4 {
        a[i][i] = Complex::new(a[i][i].re, 0.0);
    }
    let mut v = identity_entries();
    let scale = frobenius(&a);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..3 {
            for q in p + 1..4 {
                off += a[p][q].norm_sqr();
            }
        }
        if off <= 1e-34 * scale * scale {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| a[i][i].re.total_cmp(&a[j][j].re).then(i.cmp(&j)));

    let mut eigenvalues = [0.0; 4];
    let mut eigenvectors = [StateVector4::basis(0); 4];
    for (slot, &col) in order.iter().enumerate() {
        eigenvalues[slot] = a[col][col].re;
        let mut amps = [v[0][col], v[1][col], v[2][col], v[3][col]];
        fix_phase(&mut amps);
        eigenvectors[slot] = StateVector4 { amplitudes: amps };
    }
    BandSolution { eigenvalues, eigenvectors }
}

fn fix_phase(amps: &mut [Complex; 4]) {
    let mut best = 0;
    let mut best_mag = amps[0].norm_sqr();
    for (i, z) in amps.iter().enumerate().skip(1) {
        let m = z.norm_sqr();
        if m > best_mag {
            best = i;
            best_mag = m;
        }
    }
    if best_mag == 0.0 {
        return;
    }
    let phase = amps[best].conj() / best_mag.sqrt();
    for z in amps.iter_mut() {
        *z *= phase;
    }
    amps[best] = Complex::new(amps[best].re, 0.0);
}

/// One complex Jacobi rotation annihilating `a[p][q]`; accumulates into `v`.
#[inline]
fn jacobi_rotate(a: &mut Entries4, v: &mut Entries4, p: usize, q: usize) {
    let apq = a[p][q];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[p][p].re;
    let aqq = a[q][q].re;
    // Skip rotations that cannot change the diagonal at working precision.
    if r * 1e18 < app.abs() && r * 1e18 < aqq.abs() {
        a[p][q] = ZERO;
        a[q][p] = ZERO;
        return;
    }
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let s_ph = phase * s; // G[p][q]
    let s_phc = s_ph.conj(); // -G[q][p]

    // A <- A G
    for k in 0..4 {
        let akp = a[k][p];
        let akq = a[k][q];
        a[k][p] = akp * c - akq * s_phc;
        a[k][q] = akp * s_ph + akq * c;
    }
    // A <- G^dagger A
    for k in 0..4 {
        let apk = a[p][k];
        let aqk = a[q][k];
        a[p][k] = apk * c - aqk * s_ph;
        a[q][k] = apk * s_phc + aqk * c;
    }
    a[p][q] = ZERO;
    a[q][p] = ZERO;
    a[p][p] = Complex::new(a[p][p].re, 0.0);
    a[q][q] = Complex::new(a[q][q].re, 0.0);
    // V <- V G
    for row in v.iter_mut() {
        let vkp = row[p];
        let vkq = row[q];
        row[p] = vkp * c - vkq * s_phc;
        row[q] = vkp * s_ph + vkq * c;
    }
}

/// `exp(-i s H)` via the spectral decomposition.
pub fn expm_minus_i_h(h: &HermitianMatrix4, s: f64) -> UnitaryMatrix4 {
    let sol = hermitian_eig(h);
    let mut out = zero_entries();
    for (lam, v) in sol.eigenvalues.iter().zip(&sol.eigenvectors) {
        let ph = Complex::from_polar(1.0, -lam * s);
        let a = v.amplitudes();
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += a[i] * a[j].conj() * ph;
            }
        }
    }
    UnitaryMatrix4 { entries: out }
}
