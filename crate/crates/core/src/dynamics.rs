//! Single-pulse two-level physics.
//!
//! A pulse with envelope `s(t)`, area `θ = ∫ s dt` and CEO phase `φ` acts in
//! the rotating-wave approximation as
//!
//! ```text
//! U(θ, φ) = e^{−iφσ_z} (cos θ + i sin θ σ_x) e^{iφσ_z}
//! ```
//!
//! The conjugation by `e^{−iφσ_z}` rotates the drive axis by `2φ`, so in the
//! full semiclassical model the carrier enters as `cos(ω̄t + 2φ)`. The drive is
//! written `−2 s(t) cos(ω̄t + 2φ) σ_x`; the factor `2` makes the co-rotating
//! part carry exactly `s(t)` and the sign makes its RWA limit equal `U(θ, φ)`
//! rather than `U(θ, φ + π/2)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{propagate_converged, Converged};
use crate::linalg::{exp_i_sigma_z, CMatrix, Unitary, C64};

/// Minimum RK4 resolution, in steps per carrier cycle.
pub const MIN_STEPS_PER_CYCLE: usize = 100;

/// Default RK4 resolution.
pub const DEFAULT_STEPS_PER_CYCLE: usize = 128;

/// Step-halving agreement required of [`integrate_pulse`].
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Gaussian envelopes use `σ_t = τ · GAUSSIAN_WIDTH_FRACTION` before truncation.
pub const GAUSSIAN_WIDTH_FRACTION: f64 = 1.0 / 6.0;

const MAX_DOUBLINGS: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    /// Gaussian truncated to `[−τ/2, τ/2]` and renormalized.
    Gaussian,
    /// `cos²(πt/τ)`.
    Cos2,
    /// Flat top.
    Rect,
}

impl Envelope {
    /// Unit-area shape `g(t)` on `[−τ/2, τ/2]`, zero outside.
    pub fn unit_shape(self, t: f64, duration: f64) -> f64 {
        if t.abs() > 0.5 * duration {
            return 0.0;
        }
        match self {
            Envelope::Rect => 1.0 / duration,
            Envelope::Cos2 => {
                let c = (PI * t / duration).cos();
                2.0 * c * c / duration
            }
            Envelope::Gaussian => {
                let sigma = duration * GAUSSIAN_WIDTH_FRACTION;
                let norm = sigma * (TAU).sqrt() * libm::erf(0.5 * duration / (std::f64::consts::SQRT_2 * sigma));
                (-0.5 * (t / sigma).powi(2)).exp() / norm
            }
        }
    }

    /// Shape with unit peak value (used for Rabi-frequency-scaled drives).
    pub fn unit_peak_shape(self, t: f64, duration: f64) -> f64 {
        self.unit_shape(t, duration) / self.unit_shape(0.0, duration)
    }
}

/// One laser pulse as seen by the atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub envelope: Envelope,
    /// Pulse area `θ = ∫ s(t) dt` (rad).
    pub rabi_angle: f64,
    /// Duration `τ` (s); the envelope is supported on `[−τ/2, τ/2]`.
    pub duration: f64,
    /// Carrier angular frequency `ω̄` (rad/s).
    pub carrier_freq: f64,
    /// Atomic transition angular frequency `ω_at` (rad/s).
    pub atom_freq: f64,
    /// Carrier-envelope offset phase `φ_m` (rad).
    pub ceo_phase: f64,
}

impl PulseSpec {
    pub fn new(
        envelope: Envelope,
        rabi_angle: f64,
        duration: f64,
        carrier_freq: f64,
        atom_freq: f64,
        ceo_phase: f64,
    ) -> Result<Self> {
        let p = PulseSpec { envelope, rabi_angle, duration, carrier_freq, atom_freq, ceo_phase };
        p.validate()?;
        Ok(p)
    }

    /// Resonant pulse lasting `cycles` periods of the carrier `ω̄`.
    pub fn resonant(
        envelope: Envelope,
        rabi_angle: f64,
        cycles: f64,
        carrier_freq: f64,
        ceo_phase: f64,
    ) -> Result<Self> {
        Self::new(envelope, rabi_angle, cycles * TAU / carrier_freq, carrier_freq, carrier_freq, ceo_phase)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !self.rabi_angle.is_finite() || self.rabi_angle < 0.0 {
            return bad("rabi angle must be finite and >= 0");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("pulse duration must be > 0");
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return bad("carrier frequency must be > 0");
        }
        if !self.atom_freq.is_finite() || !self.ceo_phase.is_finite() {
            return bad("atom frequency and CEO phase must be finite");
        }
        Ok(())
    }

    /// Envelope `s(t)`, normalized so its integral is the pulse area.
    pub fn envelope_at(&self, t: f64) -> f64 {
        self.rabi_angle * self.envelope.unit_shape(t, self.duration)
    }

    /// Number of carrier oscillations within the pulse.
    pub fn cycles(&self) -> f64 {
        self.duration * self.carrier_freq / TAU
    }

    pub fn detuning(&self) -> f64 {
        self.atom_freq - self.carrier_freq
    }

    pub fn with_phase(mut self, ceo_phase: f64) -> Self {
        self.ceo_phase = ceo_phase;
        self
    }

    pub fn with_rabi_angle(mut self, rabi_angle: f64) -> Self {
        self.rabi_angle = rabi_angle;
        self
    }
}

/// Closed-form resonant RWA propagator `e^{−iφσ_z}(cos θ + i sin θ σ_x)e^{iφσ_z}`.
pub fn rwa_unitary_from(rabi_angle: f64, ceo_phase: f64) -> Result<Unitary> {
    if !rabi_angle.is_finite() || !ceo_phase.is_finite() {
        return Err(Error::InvalidParameter("rabi angle and phase must be finite".into()));
    }
    let (s, c) = rabi_angle.sin_cos();
    let off = C64::new(0.0, s);
    // e^{−iφσ_z} σ_x e^{iφσ_z} = e^{−2iφ}|0⟩⟨1| + e^{2iφ}|1⟩⟨0|
    let m = CMatrix::from_row_major(&[
        C64::from(c),
        off * C64::cis(-2.0 * ceo_phase),
        off * C64::cis(2.0 * ceo_phase),
        C64::from(c),
    ])?;
    Ok(Unitary::from_trusted(m))
}

/// Resonant RWA unitary of `p` (uses only θ and φ).
pub fn rwa_unitary(p: &PulseSpec) -> Result<Unitary> {
    rwa_unitary_from(p.rabi_angle, p.ceo_phase)
}

fn check_resolution(steps_per_cycle: usize) -> Result<()> {
    if steps_per_cycle < MIN_STEPS_PER_CYCLE {
        return Err(Error::InvalidParameter(format!(
            "steps_per_cycle must be >= {MIN_STEPS_PER_CYCLE}, got {steps_per_cycle}"
        )));
    }
    Ok(())
}

fn initial_steps(p: &PulseSpec, steps_per_cycle: usize) -> usize {
    ((p.cycles() * steps_per_cycle as f64).ceil() as usize).max(steps_per_cycle)
}

/// Full-model Hamiltonian in the frame rotating at `ω̄`, without the RWA.
pub fn rotating_frame_hamiltonian(p: &PulseSpec, t: f64) -> CMatrix {
    let drive = -2.0 * p.envelope_at(t) * (p.carrier_freq * t + 2.0 * p.ceo_phase).cos();
    let rot = C64::cis(p.carrier_freq * t);
    let half_detuning = C64::from(0.5 * p.detuning());
    let mut h = CMatrix::zeros(2);
    h.set(0, 0, half_detuning);
    h.set(1, 1, -half_detuning);
    h.set(0, 1, rot * drive);
    h.set(1, 0, rot.conj() * drive);
    h
}

/// RWA Hamiltonian including detuning.
pub fn rwa_hamiltonian(p: &PulseSpec, t: f64) -> CMatrix {
    let s = p.envelope_at(t);
    let half_detuning = C64::from(0.5 * p.detuning());
    let mut h = CMatrix::zeros(2);
    h.set(0, 0, half_detuning);
    h.set(1, 1, -half_detuning);
    h.set(0, 1, C64::cis(-2.0 * p.ceo_phase) * (-s));
    h.set(1, 0, C64::cis(2.0 * p.ceo_phase) * (-s));
    h
}

fn integrate_with<H: Fn(f64) -> CMatrix>(p: &PulseSpec, steps_per_cycle: usize, hamiltonian: H) -> Result<Converged> {
    p.validate()?;
    check_resolution(steps_per_cycle)?;
    let half = 0.5 * p.duration;
    let c = propagate_converged(
        2,
        -half,
        half,
        initial_steps(p, steps_per_cycle),
        CONVERGENCE_TOL,
        MAX_DOUBLINGS,
        hamiltonian,
    )?;
    log::trace!("pulse converged at {} steps (last change {:.2e})", c.steps, c.change);
    Ok(c)
}

/// Propagator of the full semiclassical pulse Hamiltonian over `[−τ/2, τ/2]`,
/// expressed in the frame rotating at the carrier frequency.
pub fn integrate_pulse(p: &PulseSpec, steps_per_cycle: usize) -> Result<Unitary> {
    let c = integrate_with(p, steps_per_cycle, |t| rotating_frame_hamiltonian(p, t))?;
    Unitary::with_tolerance(c.propagator, CONVERGENCE_TOL)
}

/// Propagator of the (possibly detuned) RWA Hamiltonian; equals
/// [`rwa_unitary`] on resonance.
pub fn integrate_rwa(p: &PulseSpec, steps_per_cycle: usize) -> Result<Unitary> {
    let c = integrate_with(p, steps_per_cycle, |t| rwa_hamiltonian(p, t))?;
    Unitary::with_tolerance(c.propagator, CONVERGENCE_TOL)
}

/// `|tr(a†b)| / dim`, which is 1 iff the two agree up to a global phase.
pub fn unitary_fidelity(a: &Unitary, b: &Unitary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let f = (a.matrix().adjoint() * *b.matrix()).trace().norm() / a.dim() as f64;
    Ok(f.clamp(0.0, 1.0))
}

/// Phase of the `σ⁺` coefficient mapped back to the CEO-phase convention:
/// for `rwa_unitary(θ, φ)` with `0 < θ < π` this returns `φ mod π`.
///
/// The conjugation law makes `φ` and `φ + π` indistinguishable, so the result
/// lies in `[0, π)`.
pub fn effective_phase(u: &Unitary) -> Result<f64> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch { left: u.dim(), right: 2 });
    }
    let lower = u.matrix().get(1, 0);
    if lower.norm() <= 1e-12 {
        return Err(Error::UndefinedPhase);
    }
    Ok(((lower.arg() - FRAC_PI_2) / 2.0).rem_euclid(PI))
}

/// `e^{−iφσ_z} U e^{iφσ_z}`.
pub fn conjugate_by_phase(u: &Unitary, phase: f64) -> Unitary {
    exp_i_sigma_z(-phase) * *u * exp_i_sigma_z(phase)
}
