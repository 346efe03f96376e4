//! Pulse trains from a frequency-comb model, and the optical transformations
//! applied to them before they reach the atom.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Envelope, PulseSpec};
use crate::error::{Error, Result};

/// Default spacing between the two pulses of an interleaved pair (s).
pub const DEFAULT_PAIR_GAP: f64 = 10e-12;

/// How the pulse-to-pulse phase step relates to the offset frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// `Δφ = 2π ν₀ T`.
    #[default]
    Radians,
    /// `Δφ = ν₀ T`, offset phase counted in cycles.
    Cycles,
}

impl PhaseConvention {
    pub fn factor(self) -> f64 {
        match self {
            PhaseConvention::Radians => TAU,
            PhaseConvention::Cycles => 1.0,
        }
    }
}

/// Pulse parameters shared by every pulse of a train; the CEO phase is per event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTemplate {
    pub envelope: Envelope,
    pub rabi_angle: f64,
    pub duration: f64,
    pub carrier_freq: f64,
    pub atom_freq: f64,
}

impl PulseTemplate {
    pub fn pulse(&self, ceo_phase: f64, rabi_angle: f64) -> PulseSpec {
        PulseSpec {
            envelope: self.envelope,
            rabi_angle,
            duration: self.duration,
            carrier_freq: self.carrier_freq,
            atom_freq: self.atom_freq,
            ceo_phase,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse(0.0, self.rabi_angle).validate()
    }

    /// Resonant optical pulse: `duration` seconds at a carrier of `wavelength` metres.
    pub fn optical(envelope: Envelope, rabi_angle: f64, duration: f64, wavelength: f64) -> Self {
        let omega = TAU * crate::noise::SPEED_OF_LIGHT / wavelength;
        PulseTemplate { envelope, rabi_angle, duration, carrier_freq: omega, atom_freq: omega }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub rep_rate_hz: f64,
    pub offset_freq_hz: f64,
    pub template: PulseTemplate,
    #[serde(default)]
    pub convention: PhaseConvention,
}

impl CombSpec {
    pub fn new(rep_rate_hz: f64, offset_freq_hz: f64, template: PulseTemplate) -> Result<Self> {
        let c = CombSpec { rep_rate_hz, offset_freq_hz, template, convention: PhaseConvention::Radians };
        c.validate()?;
        Ok(c)
    }

    pub fn with_convention(mut self, convention: PhaseConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::InvalidParameter("repetition rate must be > 0".into()));
        }
        if !self.offset_freq_hz.is_finite() {
            return Err(Error::InvalidParameter("offset frequency must be finite".into()));
        }
        self.template.validate()?;
        if self.rep_period() <= self.template.duration {
            return Err(Error::InvalidParameter("repetition period must exceed the pulse duration".into()));
        }
        Ok(())
    }

    /// `T = 1/f_rep` (s).
    pub fn rep_period(&self) -> f64 {
        1.0 / self.rep_rate_hz
    }

    /// Pulse-to-pulse CEO phase step `Δφ`.
    pub fn phase_step(&self) -> f64 {
        self.convention.factor() * self.offset_freq_hz * self.rep_period()
    }

    /// Offset frequency that produces a given phase step.
    pub fn offset_for_phase_step(&self, phase_step: f64) -> f64 {
        phase_step / (self.convention.factor() * self.rep_period())
    }

    /// Pulses needed for the CEO phase to advance by one full cycle, `f_rep/ν₀`.
    pub fn pulses_per_phase_cycle(&self) -> f64 {
        self.rep_rate_hz / self.offset_freq_hz.abs()
    }

    /// Typical trapped-ion comb: 100 MHz, 10 ps pulses at 355 nm.
    pub fn typical() -> Self {
        CombSpec {
            rep_rate_hz: 100e6,
            offset_freq_hz: 0.0,
            template: PulseTemplate::optical(Envelope::Gaussian, PI / 2.0, 10e-12, 355e-9),
            convention: PhaseConvention::Radians,
        }
    }

    /// Free-running fiber comb: 100 MHz with a 200 kHz offset, 1 ps pulses.
    pub fn fiber() -> Self {
        CombSpec {
            rep_rate_hz: 100e6,
            offset_freq_hz: 200e3,
            template: PulseTemplate::optical(Envelope::Gaussian, PI / 2.0, 1e-12, 355e-9),
            convention: PhaseConvention::Radians,
        }
    }
}

/// One pulse arrival at the atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    /// Index of the comb pulse this event came from.
    pub index: i64,
    /// Arrival time `t_m` (s).
    pub time: f64,
    /// CEO phase `φ_m` (rad).
    pub phase: f64,
    /// Pulse area `θ_m` (rad).
    pub rabi_angle: f64,
}

/// Ordered arrivals; consecutive events are at least `2τ` apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    template: PulseTemplate,
    events: Vec<PulseEvent>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    index: i64,
    t_m: f64,
    phi_m: f64,
    theta_m: f64,
}

impl PulseTrain {
    pub fn new(template: PulseTemplate, events: Vec<PulseEvent>) -> Result<Self> {
        template.validate()?;
        let required = 2.0 * template.duration;
        for w in events.windows(2) {
            let separation = w[1].time - w[0].time;
            // Allow for rounding in absolute arrival times.
            if !(separation >= required * (1.0 - 1e-6)) {
                return Err(Error::Overlap { separation, required });
            }
        }
        if events.iter().any(|e| !e.phase.is_finite() || !(e.rabi_angle >= 0.0)) {
            return Err(Error::InvalidParameter("events need finite phases and areas >= 0".into()));
        }
        Ok(PulseTrain { template, events })
    }

    pub fn template(&self) -> &PulseTemplate {
        &self.template
    }

    pub fn events(&self) -> &[PulseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.phase).collect()
    }

    pub fn pulses(&self) -> impl Iterator<Item = PulseSpec> + '_ {
        self.events.iter().map(|e| self.template.pulse(e.phase, e.rabi_angle))
    }

    /// Same arrivals with replaced phases.
    pub fn with_phases(&self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.events.len() {
            return Err(Error::DimensionMismatch { left: phases.len(), right: self.events.len() });
        }
        let events = self.events.iter().zip(phases).map(|(e, &phase)| PulseEvent { phase, ..*e }).collect();
        PulseTrain::new(self.template, events)
    }

    /// Writes `index,t_m,phi_m,theta_m` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            w.serialize(CsvRow { index: e.index, t_m: e.time, phi_m: e.phase, theta_m: e.rabi_angle })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(template: PulseTemplate, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut events = Vec::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            events.push(PulseEvent { index: row.index, time: row.t_m, phase: row.phi_m, rabi_angle: row.theta_m });
        }
        PulseTrain::new(template, events)
    }
}

/// `n_pulses` consecutive comb pulses starting at comb index `start_index`:
/// `t_m = mT`, `φ_m = mΔφ`.
pub fn generate_train(comb: &CombSpec, n_pulses: usize, start_index: i64) -> Result<PulseTrain> {
    comb.validate()?;
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("a train needs at least one pulse".into()));
    }
    let period = comb.rep_period();
    let step = comb.phase_step();
    let events = (0..n_pulses as i64)
        .map(|k| {
            let m = start_index + k;
            PulseEvent {
                index: m,
                time: m as f64 * period,
                phase: m as f64 * step,
                rabi_angle: comb.template.rabi_angle,
            }
        })
        .collect();
    PulseTrain::new(comb.template, events)
}

/// Options for [`split_delay_interleave`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterleaveOptions {
    /// Delay `N_d = T_d/T` in comb periods.
    pub delay_pulses: usize,
    /// Number of pairs to form; `None` forms as many as possible.
    pub pairs: Option<usize>,
    /// Arrival spacing inside a pair (s).
    pub pair_gap: f64,
}

impl InterleaveOptions {
    pub fn new(delay_pulses: usize) -> Self {
        InterleaveOptions { delay_pulses, pairs: None, pair_gap: DEFAULT_PAIR_GAP }
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = Some(pairs);
        self
    }

    pub fn with_gap(mut self, pair_gap: f64) -> Self {
        self.pair_gap = pair_gap;
        self
    }
}

/// Splits the train into a direct and a delayed line and recombines them so
/// that pulse `j` (delayed by `N_d T`) arrives just before pulse `j + N_d`.
///
/// Output order alternates `φ_j, φ_{j+N_d}`. Pulses are taken greedily in
/// index order and each source pulse is used at most once; with `N_d = 0`
/// each pulse meets its own beam-splitter copy.
pub fn split_delay_interleave(train: &PulseTrain, opts: InterleaveOptions) -> Result<PulseTrain> {
    let required = 2.0 * train.template.duration;
    if !(opts.pair_gap >= required) {
        return Err(Error::Overlap { separation: opts.pair_gap, required });
    }
    let delay = opts.delay_pulses as i64;
    let by_index: std::collections::HashMap<i64, &PulseEvent> = train.events.iter().map(|e| (e.index, e)).collect();
    let mut used = std::collections::HashSet::new();
    let limit = opts.pairs.unwrap_or(usize::MAX);
    let mut events = Vec::new();
    let mut formed = 0usize;
    for early in &train.events {
        if formed == limit {
            break;
        }
        let Some(&late) = by_index.get(&(early.index + delay)) else { continue };
        if delay > 0 && (used.contains(&early.index) || used.contains(&late.index)) {
            continue;
        }
        used.insert(early.index);
        used.insert(late.index);
        events.push(PulseEvent { time: late.time, ..*early });
        events.push(PulseEvent { time: late.time + opts.pair_gap, ..*late });
        formed += 1;
    }
    if let Some(p) = opts.pairs {
        if formed < p {
            return Err(Error::InvalidParameter(format!(
                "train only supports {formed} pairs at delay {delay}, {p} requested"
            )));
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    PulseTrain::new(train.template, events)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AmplitudeRule {
    /// Each replica carries `θ/n`.
    Equal,
    /// Replica `k` carries `θ(1 − r) r^k`; the remainder leaks out of the device.
    Geometric { ratio: f64 },
}

/// Radiative and coherence lifetimes that cap the replica count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub radiative: f64,
    pub coherence: f64,
}

/// Beam splitter and delayer: each pulse becomes `n` replicas `Δt` apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsdSpec {
    pub replicas: usize,
    pub spacing: f64,
    pub amplitude: AmplitudeRule,
    pub lifetimes: Option<Lifetimes>,
}

/// `n ≤ min(τ_rad, τ_coh) / (2τ)`.
pub fn max_replicas(lifetimes: Lifetimes, pulse_duration: f64) -> usize {
    (lifetimes.radiative.min(lifetimes.coherence) / (2.0 * pulse_duration) + 1e-9).floor() as usize
}

pub fn bsd_replicate(train: &PulseTrain, bsd: &BsdSpec) -> Result<PulseTrain> {
    let tau = train.template.duration;
    if bsd.replicas == 0 {
        return Err(Error::InvalidParameter("BSD needs at least one replica".into()));
    }
    if !(bsd.spacing >= 2.0 * tau) && bsd.replicas > 1 {
        return Err(Error::Overlap { separation: bsd.spacing, required: 2.0 * tau });
    }
    if let Some(l) = bsd.lifetimes {
        let allowed = max_replicas(l, tau);
        if bsd.replicas > allowed {
            return Err(Error::ReplicaBudget { requested: bsd.replicas, allowed });
        }
    }
    let weights: Vec<f64> = match bsd.amplitude {
        AmplitudeRule::Equal => vec![1.0 / bsd.replicas as f64; bsd.replicas],
        AmplitudeRule::Geometric { ratio } => {
            if !(0.0..1.0).contains(&ratio) {
                return Err(Error::InvalidParameter("geometric ratio must lie in [0, 1)".into()));
            }
            (0..bsd.replicas).map(|k| (1.0 - ratio) * ratio.powi(k as i32)).collect()
        }
    };
    let mut events: Vec<PulseEvent> = train
        .events
        .iter()
        .flat_map(|e| {
            weights.iter().enumerate().map(move |(k, w)| PulseEvent {
                time: e.time + k as f64 * bsd.spacing,
                rabi_angle: e.rabi_angle * w,
                ..*e
            })
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    PulseTrain::new(train.template, events)
}

/// Stochastic CEO-phase noise of a non-ideal comb.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum JitterModel {
    None,
    /// Independent Gaussian phase error of std `sigma` on every pulse.
    White {
        sigma: f64,
    },
    /// Phase random walk with per-pulse increment std `sigma`.
    RandomWalk {
        sigma: f64,
    },
}

impl JitterModel {
    /// Random walk of a free-running offset with Lorentzian linewidth
    /// `linewidth_hz`: per-pulse variance `2π·Δν·T`.
    pub fn lorentzian(linewidth_hz: f64, rep_rate_hz: f64) -> Self {
        JitterModel::RandomWalk { sigma: (TAU * linewidth_hz / rep_rate_hz).sqrt() }
    }

    /// Predicted std of the phase error accumulated after `n` pulses.
    pub fn accumulated_std(&self, n: usize) -> f64 {
        match *self {
            JitterModel::None => 0.0,
            JitterModel::White { sigma } => sigma,
            JitterModel::RandomWalk { sigma } => sigma * (n.saturating_sub(1) as f64).sqrt(),
        }
    }
}

/// Trains whose predicted accumulated jitter exceeds this are flagged.
pub const WRAP_RISK_STD: f64 = PI / 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct JitteredTrain {
    pub train: PulseTrain,
    /// Per-event phase error that was added.
    pub phase_errors: Vec<f64>,
    pub accumulated_std: f64,
    pub wrap_risk: bool,
}

pub fn apply_phase_jitter(train: &PulseTrain, model: JitterModel, seed: u64) -> Result<JitteredTrain> {
    let n = train.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = match model {
        JitterModel::None => vec![0.0; n],
        JitterModel::White { sigma } | JitterModel::RandomWalk { sigma } if sigma == 0.0 => vec![0.0; n],
        JitterModel::White { sigma } => {
            let normal = gaussian(sigma)?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        JitterModel::RandomWalk { sigma } => {
            let normal = gaussian(sigma)?;
            let mut acc = 0.0;
            (0..n)
                .map(|k| {
                    if k > 0 {
                        acc += normal.sample(&mut rng);
                    }
                    acc
                })
                .collect()
        }
    };
    let phases: Vec<f64> = train.events.iter().zip(&errors).map(|(e, d)| e.phase + d).collect();
    let accumulated_std = model.accumulated_std(n);
    Ok(JitteredTrain {
        train: train.with_phases(&phases)?,
        phase_errors: errors,
        accumulated_std,
        wrap_risk: accumulated_std >= WRAP_RISK_STD,
    })
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("jitter std: {e}")))
}
