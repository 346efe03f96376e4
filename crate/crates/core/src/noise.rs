//! Slow dephasing fields and thermal motion as phase errors on a pulse train.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::comb::{PulseEvent, PulseTrain};
use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of ⁹Be (kg).
pub const BERYLLIUM_9_MASS: f64 = 9.012_183_1 * ATOMIC_MASS_UNIT;
/// Mass of ⁴⁰Ca (kg).
pub const CALCIUM_40_MASS: f64 = 39.962_590_863 * ATOMIC_MASS_UNIT;

/// The field must stay correlated for at least this many pulse durations.
pub const MIN_CORRELATION_PULSES: f64 = 10.0;

/// Zero-mean Ornstein-Uhlenbeck level shift `ε(t)` (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingSpec {
    /// Stationary standard deviation `σ_ε` (rad/s).
    pub sigma: f64,
    /// Correlation time (s).
    pub correlation_time: f64,
    pub seed: u64,
}

impl DephasingSpec {
    /// `σ_ε = 2π·sigma_hz`.
    pub fn from_hz(sigma_hz: f64, correlation_time: f64, seed: u64) -> Self {
        DephasingSpec { sigma: TAU * sigma_hz, correlation_time, seed }
    }

    pub fn validate(&self, pulse_duration: f64) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("dephasing std must be finite and >= 0".into()));
        }
        if !(self.correlation_time > MIN_CORRELATION_PULSES * pulse_duration) {
            return Err(Error::InvalidParameter(format!(
                "correlation time {:.3e} s must exceed {MIN_CORRELATION_PULSES} pulse durations",
                self.correlation_time
            )));
        }
        Ok(())
    }

    /// Field values at the given (increasing) times, exact OU transitions.
    pub fn sample_field(&self, times: &[f64]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(times.len());
        let mut eps = 0.0;
        for (k, &t) in times.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            eps = if k == 0 {
                self.sigma * z
            } else {
                let decay = (-(t - times[k - 1]) / self.correlation_time).exp();
                eps * decay + self.sigma * (1.0 - decay * decay).sqrt() * z
            };
            out.push(eps);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DephasedTrain {
    pub train: PulseTrain,
    /// `ε` at each arrival (rad/s).
    pub field: Vec<f64>,
    /// Cumulative phase added to each event (rad).
    pub phase_errors: Vec<f64>,
}

impl DephasedTrain {
    /// Error added to `φ_{2k+1} − φ_{2k}` for each consecutive pair.
    pub fn pair_errors(&self) -> Vec<f64> {
        self.phase_errors.chunks_exact(2).map(|p| p[1] - p[0]).collect()
    }
}

/// Adds `∫ε dt` between consecutive arrivals to the phase differences,
/// using the trapezoid rule on the field sampled at the arrivals.
pub fn dephase_train(train: &PulseTrain, spec: &DephasingSpec) -> Result<DephasedTrain> {
    spec.validate(train.template().duration)?;
    let times: Vec<f64> = train.events().iter().map(|e| e.time).collect();
    let field = if spec.sigma == 0.0 { vec![0.0; times.len()] } else { spec.sample_field(&times) };
    let phase_errors = accumulate(&times, |k| field[k]);
    let phases: Vec<f64> = train.events().iter().zip(&phase_errors).map(|(e, d)| e.phase + d).collect();
    Ok(DephasedTrain { train: train.with_phases(&phases)?, field, phase_errors })
}

/// Same as [`dephase_train`] for a constant field `ε`.
pub fn dephase_constant(train: &PulseTrain, epsilon: f64) -> Result<DephasedTrain> {
    let times: Vec<f64> = train.events().iter().map(|e| e.time).collect();
    let phase_errors = accumulate(&times, |_| epsilon);
    let phases: Vec<f64> = train.events().iter().zip(&phase_errors).map(|(e, d)| e.phase + d).collect();
    Ok(DephasedTrain { train: train.with_phases(&phases)?, field: vec![epsilon; times.len()], phase_errors })
}

fn accumulate(times: &[f64], field: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if k > 0 {
            acc += 0.5 * (field(k - 1) + field(k)) * (times[k] - times[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Swaps the arrival order inside every second pair, so that with
/// [`echo_pair_phase`] a static field cancels while the pair signal adds up.
pub fn echo_order(train: &PulseTrain) -> Result<PulseTrain> {
    if train.len() % 2 != 0 {
        return Err(Error::OddLength(train.len()));
    }
    let mut events: Vec<PulseEvent> = train.events().to_vec();
    for (k, pair) in events.chunks_exact_mut(2).enumerate() {
        if k % 2 == 1 {
            let (t0, t1) = (pair[0].time, pair[1].time);
            pair.swap(0, 1);
            pair[0].time = t0;
            pair[1].time = t1;
        }
    }
    PulseTrain::new(*train.template(), events)
}

/// Phase read out from consecutive pairs, `Σ_k s_k (φ_{2k+1} − φ_{2k})`
/// with `s_k = (−1)^k` when `echo` is set (a refocusing flip between pairs)
/// and `s_k = 1` otherwise.
pub fn echo_pair_phase(train: &PulseTrain, echo: bool) -> Result<f64> {
    if train.len() % 2 != 0 {
        return Err(Error::OddLength(train.len()));
    }
    Ok(train
        .events()
        .chunks_exact(2)
        .enumerate()
        .map(|(k, p)| {
            let sign = if echo && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (p[1].phase - p[0].phase)
        })
        .sum())
}

/// Thermal motion of a Doppler-cooled atom between pulses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    /// Natural linewidth `Γ` of the cooling transition (rad/s).
    pub linewidth: f64,
    pub mass_kg: f64,
    pub wavelength_m: f64,
    /// Co-propagating Raman beams transfer no net momentum.
    pub copropagating_raman: bool,
}

impl ThermalSpec {
    /// Light ion with a pessimistic `Γ = 2π·200 MHz` at 313 nm.
    pub fn beryllium() -> Self {
        ThermalSpec {
            linewidth: TAU * 200e6,
            mass_kg: BERYLLIUM_9_MASS,
            wavelength_m: 313e-9,
            copropagating_raman: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("linewidth", self.linewidth), ("mass", self.mass_kg), ("wavelength", self.wavelength_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// `v = √(2ħΓ/m)`, taking all of `k_B T ≈ ħΓ` as kinetic energy.
    pub fn velocity(&self) -> f64 {
        (2.0 * HBAR * self.linewidth / self.mass_kg).sqrt()
    }

    /// Doppler temperature `ħΓ/k_B` (K).
    pub fn temperature(&self) -> f64 {
        HBAR * self.linewidth / BOLTZMANN
    }
}

/// `δφ = (2π/λ)·v·gap`, or exactly 0 for co-propagating Raman beams.
pub fn doppler_phase_error(spec: &ThermalSpec, gap: f64) -> Result<f64> {
    spec.validate()?;
    if !(gap >= 0.0) {
        return Err(Error::InvalidParameter("gap must be >= 0".into()));
    }
    if spec.copropagating_raman {
        return Ok(0.0);
    }
    Ok(TAU / spec.wavelength_m * spec.velocity() * gap)
}
