//! Small dense complex matrices (2×2 and 3×3) and the Pauli algebra used by
//! every other module.
//!
//! Basis ordering is `(|0⟩, |1⟩)` for the qubit and `(|a⟩, |b⟩, |c⟩)` for the
//! three-level atom. `σ_z = diag(1, −1)` and `σ⁺ = |1⟩⟨0|`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_DIM: usize = 3;

/// Tolerance on `‖U†U − 1‖_F` for a matrix to be accepted as a [`Unitary`].
pub const UNITARITY_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix of dimension 1..=3 stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: [C64; MAX_DIM * MAX_DIM],
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported matrix dimension {dim}");
        CMatrix { dim, data: [ZERO; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.set(k, k, ONE);
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = match entries.len() {
            1 => 1,
            4 => 2,
            9 => 3,
            n => return Err(Error::InvalidParameter(format!("{n} entries do not form a supported square matrix"))),
        };
        let mut m = Self::zeros(dim);
        for (k, &z) in entries.iter().enumerate() {
            m.set(k / dim, k % dim, z);
        }
        Ok(m)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (k, &z) in entries.iter().enumerate() {
            m.set(k, k, z);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row * MAX_DIM + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row * MAX_DIM + col] = value;
    }

    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.push(self.get(r, c));
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                m.set(r, c, self.get(c, r).conj());
            }
        }
        m
    }

    pub fn scale(&self, z: C64) -> Self {
        let mut m = *self;
        for v in m.data.iter_mut() {
            *v *= z;
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F`; panics on dimension mismatch.
    pub fn distance(&self, other: &CMatrix) -> f64 {
        (*self - *other).frobenius_norm()
    }

    /// `‖M†M − 1‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self - CMatrix::identity(self.dim)).frobenius_norm()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim).map(|r| (0..self.dim).map(|c| self.get(r, c) * v[c]).sum()).collect()
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<C64>> = (0..self.dim).map(|r| (0..self.dim).map(|c| self.get(r, c)).collect()).collect();
        f.debug_struct("CMatrix").field("rows", &rows).finish()
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let n = self.dim;
        let mut m = CMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.get(r, k) * rhs.get(k, c);
                }
                m.set(r, c, acc);
            }
        }
        m
    }
}

impl Add for CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let mut m = self;
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        m
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let mut m = self;
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        m
    }
}

/// A 2×2 or 3×3 matrix satisfying `U†U = 1` within a tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary(CMatrix);

impl Unitary {
    /// Accepts `m` if its unitarity defect is below [`UNITARITY_TOL`].
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, UNITARITY_TOL)
    }

    pub fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        if !(2..=3).contains(&m.dim()) {
            return Err(Error::InvalidParameter(format!("unitaries must be 2x2 or 3x3, got {0}x{0}", m.dim())));
        }
        let defect = m.unitarity_defect();
        if !(defect <= tol) {
            return Err(Error::NotUnitary { defect, tolerance: tol });
        }
        Ok(Unitary(m))
    }

    /// Wraps a matrix that is unitary by construction (closed forms).
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        debug_assert!(m.unitarity_defect() < 1e-8, "defect {}", m.unitarity_defect());
        Unitary(m)
    }

    pub fn identity(dim: usize) -> Self {
        Unitary(CMatrix::identity(dim))
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn adjoint(&self) -> Unitary {
        Unitary(self.0.adjoint())
    }

    /// Product `self · rhs` (apply `rhs` first).
    pub fn then_after(&self, rhs: &Unitary) -> Unitary {
        Unitary(self.0 * rhs.0)
    }
}

impl Mul for Unitary {
    type Output = Unitary;

    fn mul(self, rhs: Unitary) -> Unitary {
        Unitary(self.0 * rhs.0)
    }
}

/// Normalized state vector of a two- or three-level system.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitState {
    amplitudes: Vec<C64>,
}

impl QubitState {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if !(2..=3).contains(&amplitudes.len()) {
            return Err(Error::InvalidParameter(format!("state dimension {} unsupported", amplitudes.len())));
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidParameter(format!("state norm {norm} != 1")));
        }
        Ok(QubitState { amplitudes })
    }

    /// Computational basis state `|k⟩` in `dim` levels.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[k] = ONE;
        QubitState { amplitudes }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn evolve(&self, u: &Unitary) -> Result<QubitState> {
        if u.dim() != self.amplitudes.len() {
            return Err(Error::DimensionMismatch { left: u.dim(), right: self.amplitudes.len() });
        }
        Ok(QubitState { amplitudes: u.matrix().apply(&self.amplitudes) })
    }
}

/// Serializable view of a matrix: row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntries {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMatrix> for MatrixEntries {
    fn from(m: &CMatrix) -> Self {
        let entries = m.row_major();
        MatrixEntries {
            dim: m.dim(),
            re: entries.iter().map(|z| z.re).collect(),
            im: entries.iter().map(|z| z.im).collect(),
        }
    }
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_major(&[ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_major(&[ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> CMatrix {
    CMatrix::diag(&[ONE, -ONE])
}

/// Raising operator `σ⁺ = |1⟩⟨0|`.
pub fn sigma_plus() -> CMatrix {
    CMatrix::from_row_major(&[ZERO, ZERO, ONE, ZERO]).unwrap()
}

/// `U_H = (σ_x + σ_z)/√2`.
pub fn hadamard() -> Unitary {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Unitary::from_trusted(CMatrix::from_row_major(&[C64::from(h), C64::from(h), C64::from(h), C64::from(-h)]).unwrap())
}

/// `exp(i·angle·σ_z)`.
pub fn exp_i_sigma_z(angle: f64) -> Unitary {
    Unitary::from_trusted(CMatrix::diag(&[C64::cis(angle), C64::cis(-angle)]))
}

/// `exp(i·angle·σ_x) = cos(angle) + i sin(angle) σ_x`.
pub fn exp_i_sigma_x(angle: f64) -> Unitary {
    let (s, c) = angle.sin_cos();
    Unitary::from_trusted(CMatrix::from_row_major(&[C64::from(c), I * s, I * s, C64::from(c)]).unwrap())
}

/// `diag(1, e^{iξ})`: the reference phase applied to level `|1⟩`.
pub fn reference_phase_gate(xi: f64) -> Unitary {
    Unitary::from_trusted(CMatrix::diag(&[ONE, C64::cis(xi)]))
}

/// Phase accumulated by a diagonal 2×2 unitary written as `e^{iγ} exp(−i·a·σ_z)`:
/// returns `a` in `(−π/2, π/2]`, independent of the global phase `γ`.
pub fn sigma_z_angle(u: &Unitary) -> Result<f64> {
    let m = u.matrix();
    if m.dim() != 2 || m.get(0, 1).norm() > 1e-9 || m.get(1, 0).norm() > 1e-9 {
        return Err(Error::InvalidParameter("unitary is not diagonal".into()));
    }
    // u00/u11 = e^{-2ia}
    let ratio = m.get(0, 0) / m.get(1, 1);
    let mut a = -ratio.arg() / 2.0;
    if a <= -std::f64::consts::FRAC_PI_2 {
        a += std::f64::consts::PI;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pauli_algebra() {
        let x = pauli_x();
        let y = pauli_y();
        let z = pauli_z();
        let i2 = CMatrix::identity(2);
        assert!((x * x).distance(&i2) < 1e-15);
        assert!((x * y).distance(&z.scale(I)) < 1e-15);
        assert!((x * z + z * x).frobenius_norm() < 1e-15);
        // σ⁺ = (σ_x − iσ_y)/2 for σ⁺ = |1⟩⟨0|
        let sp = (x - y.scale(I)).scale(C64::from(0.5));
        assert!(sp.distance(&sigma_plus()) < 1e-15);
    }

    #[test]
    fn unitary_rejects_non_unitary() {
        let m = CMatrix::identity(2).scale(C64::from(1.1));
        assert!(matches!(Unitary::new(m), Err(Error::NotUnitary { .. })));
        assert!(Unitary::new(CMatrix::identity(1)).is_err());
    }

    #[test]
    fn sigma_z_angle_ignores_global_phase() {
        let u = exp_i_sigma_z(-0.3).into_matrix().scale(C64::cis(1.234));
        let a = sigma_z_angle(&Unitary::new(u).unwrap()).unwrap();
        assert!((a - 0.3).abs() < 1e-14);
        let a = sigma_z_angle(&exp_i_sigma_z(-PI / 2.0 + 0.01)).unwrap();
        assert!((a - (PI / 2.0 - 0.01)).abs() < 1e-14);
    }

    #[test]
    fn state_norm_checked() {
        assert!(QubitState::new(vec![ONE, ONE]).is_err());
        let s = QubitState::basis(2, 0).evolve(&hadamard()).unwrap();
        let p = s.populations();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }
}
