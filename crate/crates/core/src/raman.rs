//! Three-level Λ systems driven by two pulsed Raman legs.
//!
//! Levels are ordered `(a, b, c)`: `a` and `b` are the qubit, `c` the excited
//! state at energy `ω_at`. Each leg couples one qubit level to `c` with
//! `s(t) cos(ωt + φ_j)`. Propagators are returned in the frame rotating `c`
//! at the laser frequency `ω`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Envelope, CONVERGENCE_TOL, MIN_STEPS_PER_CYCLE};
use crate::error::{Error, Result};
use crate::integrator::propagate_converged;
use crate::linalg::{exp_i_sigma_x, exp_i_sigma_z, CMatrix, Unitary, C64};

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const MAX_DOUBLINGS: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSpec {
    /// Shared envelope of both legs, scaled to unit peak.
    pub envelope: Envelope,
    /// Peak drive amplitude `Ω` (rad/s).
    pub rabi_scale: f64,
    /// Pulse duration `τ` (s).
    pub duration: f64,
    /// Laser frequency `ω` (rad/s).
    pub laser_freq: f64,
    /// Excited-state energy `ω_at` (rad/s).
    pub excited_freq: f64,
    /// Phase `φ_1` of the `a ↔ c` leg.
    pub phase_a: f64,
    /// Phase `φ_2` of the `b ↔ c` leg.
    pub phase_b: f64,
}

impl LambdaSpec {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [("duration", self.duration), ("laser frequency", self.laser_freq), ("excited energy", self.excited_freq)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        if !(self.rabi_scale >= 0.0 && self.rabi_scale.is_finite()) {
            return Err(Error::InvalidParameter("rabi scale must be finite and >= 0".into()));
        }
        if self.detuning() == 0.0 {
            return Err(Error::InvalidParameter("Raman regime needs a nonzero detuning".into()));
        }
        if !(self.phase_a.is_finite() && self.phase_b.is_finite()) {
            return Err(Error::InvalidParameter("leg phases must be finite".into()));
        }
        Ok(())
    }

    /// `δ = ω_at − ω`.
    pub fn detuning(&self) -> f64 {
        self.excited_freq - self.laser_freq
    }

    /// `φ_l = φ_2 − φ_1`.
    pub fn relative_phase(&self) -> f64 {
        self.phase_b - self.phase_a
    }

    /// Carrier cycles within the pulse.
    pub fn cycles(&self) -> f64 {
        self.duration * self.laser_freq / TAU
    }

    /// Same pulse with `φ_1 = 0` and `φ_2 = φ_l`.
    pub fn with_relative_phase(mut self, phi_l: f64) -> Self {
        self.phase_a = 0.0;
        self.phase_b = phi_l;
        self
    }

    fn drive(&self, t: f64) -> f64 {
        self.rabi_scale * self.envelope.unit_peak_shape(t, self.duration)
    }

    /// Full Hamiltonian in the frame rotating `c` at `ω` (no RWA).
    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let s = self.drive(t);
        let rot = C64::cis(self.laser_freq * t);
        let ca = rot * (s * (self.laser_freq * t + self.phase_a).cos());
        let cb = rot * (s * (self.laser_freq * t + self.phase_b).cos());
        self.assemble(ca, cb)
    }

    /// RWA Hamiltonian: the legs keep only `(s/2) e^{−iφ_j}`.
    pub fn rwa_hamiltonian(&self, t: f64) -> CMatrix {
        let half = 0.5 * self.drive(t);
        self.assemble(C64::cis(-self.phase_a) * half, C64::cis(-self.phase_b) * half)
    }

    fn assemble(&self, ca: C64, cb: C64) -> CMatrix {
        let mut h = CMatrix::zeros(3);
        h.set(C, C, C64::from(self.detuning()));
        h.set(C, A, ca);
        h.set(A, C, ca.conj());
        h.set(C, B, cb);
        h.set(B, C, cb.conj());
        h
    }
}

/// Outcome of one Λ pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaPropagation {
    pub unitary: Unitary,
    /// Population left in `c` starting from `a`.
    pub excited_population: f64,
}

impl LambdaPropagation {
    /// Qubit phase `φ_s = arg U_ba − arg U_aa` for a start in `a`.
    pub fn qubit_phase(&self) -> Result<f64> {
        let m = self.unitary.matrix();
        let (ba, aa) = (m.get(B, A), m.get(A, A));
        if ba.norm() < 1e-12 || aa.norm() < 1e-12 {
            return Err(Error::UndefinedPhase);
        }
        Ok((ba * aa.conj()).arg())
    }

    /// Population transferred to `b` starting from `a`.
    pub fn transfer(&self) -> f64 {
        self.unitary.matrix().get(B, A).norm_sqr()
    }
}

fn integrate_with<H: Fn(f64) -> CMatrix>(l: &LambdaSpec, steps_per_cycle: usize, h: H) -> Result<LambdaPropagation> {
    l.validate()?;
    if steps_per_cycle < MIN_STEPS_PER_CYCLE {
        return Err(Error::InvalidParameter(format!("steps_per_cycle must be >= {MIN_STEPS_PER_CYCLE}")));
    }
    // resolve both the carrier and the detuning phase
    let fastest = l.laser_freq.max(l.detuning().abs());
    let cycles = l.duration * fastest / TAU;
    let steps = ((cycles * steps_per_cycle as f64).ceil() as usize).max(steps_per_cycle);
    let half = 0.5 * l.duration;
    let c = propagate_converged(3, -half, half, steps, CONVERGENCE_TOL, MAX_DOUBLINGS, h)?;
    let unitary = Unitary::with_tolerance(c.propagator, CONVERGENCE_TOL)?;
    let excited_population = unitary.matrix().get(C, A).norm_sqr();
    Ok(LambdaPropagation { unitary, excited_population })
}

/// Propagator of the full three-level Hamiltonian over `[−τ/2, τ/2]`.
pub fn integrate_lambda(l: &LambdaSpec, steps_per_cycle: usize) -> Result<LambdaPropagation> {
    integrate_with(l, steps_per_cycle, |t| l.hamiltonian(t))
}

/// Same pulse under the RWA Hamiltonian.
pub fn integrate_lambda_rwa(l: &LambdaSpec, steps_per_cycle: usize) -> Result<LambdaPropagation> {
    integrate_with(l, steps_per_cycle, |t| l.rwa_hamiltonian(t))
}

/// `exp(−iφ σ_z^{ab})` acting on the qubit levels: `diag(e^{−iφ}, e^{iφ}, 1)`.
pub fn qubit_z_rotation(phi: f64) -> Unitary {
    Unitary::new(CMatrix::diag(&[C64::cis(-phi), C64::cis(phi), C64::from(1.0)])).expect("diagonal phases")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMapPoint {
    pub phi_l: f64,
    pub phi_s: f64,
    pub dphi_s_dphi_l: f64,
}

/// `φ_s(φ_l)` normalized to `φ_s(0) = 0` and unwrapped along the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    pub points: Vec<PhaseMapPoint>,
    /// `max |φ_s − φ_l|` (rad).
    pub max_deviation: f64,
    /// `max |dφ_s/dφ_l − 1|`.
    pub max_slope_error: f64,
    pub min_slope: f64,
    pub monotone: bool,
}

impl PhaseMap {
    /// Errors when the curve is not strictly increasing.
    pub fn require_monotone(&self) -> Result<&Self> {
        if self.monotone {
            Ok(self)
        } else {
            Err(Error::NonMonotonic(format!("minimum slope {:.4}", self.min_slope)))
        }
    }

    /// Rows `phi_l,phi_s,dphi_s_dphi_l` with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evenly spaced `φ_l` grid covering `[0, 2π)`.
pub fn uniform_phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

/// Samples the imprinted qubit phase over `grid` (increasing, within one
/// period). Slopes use centered differences of a symmetric `±h` probe.
pub fn phase_map(l: &LambdaSpec, grid: &[f64], steps_per_cycle: usize) -> Result<PhaseMap> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("phase grid must be nonempty and increasing".into()));
    }
    let h = 1e-3;
    let phase_at =
        |phi: f64| -> Result<f64> { integrate_lambda(&l.with_relative_phase(phi), steps_per_cycle)?.qubit_phase() };
    let reference = phase_at(0.0)?;
    let samples: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&phi| Ok((phase_at(phi)?, phase_at(phi - h)?, phase_at(phi + h)?)))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(grid.len());
    for (&phi_l, &(mid, lo, hi)) in grid.iter().zip(&samples) {
        // unwrap onto the branch nearest the identity map
        let phi_s = phi_l + wrap(mid - reference - phi_l);
        let slope = (wrap(hi - mid) + wrap(mid - lo)) / (2.0 * h);
        points.push(PhaseMapPoint { phi_l, phi_s, dphi_s_dphi_l: slope });
    }
    let max_deviation = points.iter().map(|p| (p.phi_s - p.phi_l).abs()).fold(0.0, f64::max);
    let max_slope_error = points.iter().map(|p| (p.dphi_s_dphi_l - 1.0).abs()).fold(0.0, f64::max);
    let min_slope = points.iter().map(|p| p.dphi_s_dphi_l).fold(f64::INFINITY, f64::min);
    let increasing = points.windows(2).all(|w| w[1].phi_s > w[0].phi_s);
    Ok(PhaseMap { points, max_deviation, max_slope_error, min_slope, monotone: increasing && min_slope > 0.0 })
}

/// Reduces into `(−π, π]`.
fn wrap(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Effective qubit parameters of a Raman pulse pair sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamanEffective {
    /// Effective Rabi angle `θ′` per pulse.
    pub rabi_angle: f64,
    /// True pulse-to-pulse phase step `Δφ`.
    pub phase_step: f64,
    /// Delay `N_d` between the paired legs, in comb periods.
    pub delay: u64,
    /// Laser frequency `ω` (rad/s).
    pub laser_freq: f64,
    /// Deviation `δT` of the delay line from `N_d T` (s).
    pub delay_mismatch: f64,
    /// Comb period `T` (s).
    pub rep_period: f64,
}

impl RamanEffective {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_period > 0.0) {
            return Err(Error::InvalidParameter("comb period must be > 0".into()));
        }
        if !(self.delay_mismatch.abs() < self.rep_period) {
            return Err(Error::InvalidParameter("delay mismatch must satisfy |δT| < T".into()));
        }
        if !(self.rabi_angle.is_finite() && self.phase_step.is_finite() && self.laser_freq.is_finite()) {
            return Err(Error::InvalidParameter("effective parameters must be finite".into()));
        }
        Ok(())
    }

    /// Step actually measured, `Δφ′ = Δφ + ω δT`.
    pub fn measured_phase_step(&self) -> f64 {
        self.phase_step + self.laser_freq * self.delay_mismatch
    }

    /// Self-referenced per-pulse phase `φ′ = N_d Δφ′`.
    pub fn effective_phase(&self) -> f64 {
        self.delay as f64 * self.measured_phase_step()
    }
}

/// `e^{−iN_dΔφ′σ_z} e^{iNθ′σ_x} e^{iN_dΔφ′σ_z}`.
pub fn effective_qubit_unitary(r: &RamanEffective, n: u64) -> Result<Unitary> {
    r.validate()?;
    let total = n as f64 * r.rabi_angle;
    if (total - PI / 4.0).abs() > PI / 8.0 {
        log::info!("Nθ′ = {total:.3}; the read-out is most sensitive near π/4");
    }
    let phi = r.effective_phase();
    Ok(exp_i_sigma_z(-phi) * exp_i_sigma_x(total) * exp_i_sigma_z(phi))
}

/// Non-overlapping `π/2` Λ pair as an ideal gate: `|1⟩ → −e^{i(φ_m − φ_{m−N_d})}|1⟩`.
pub fn pair_phase_gate(phase: f64, delayed_phase: f64) -> Unitary {
    Unitary::new(CMatrix::diag(&[C64::from(1.0), -C64::cis(phase - delayed_phase)])).expect("diagonal phases")
}

/// Pulses affordable before spontaneous emission from the excited state
/// costs a fraction `1 − ε` of the visibility: `⌊−ln ε / (γ T_e)⌋`.
pub fn visibility_budget(decay_rate: f64, excited_time: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter("visibility fraction must lie in (0, 1]".into()));
    }
    if !(decay_rate > 0.0 && excited_time > 0.0) {
        return Err(Error::InvalidParameter("decay rate and excited time must be > 0".into()));
    }
    Ok((-epsilon.ln() / (decay_rate * excited_time) + 1e-9).floor().max(0.0) as u64)
}
