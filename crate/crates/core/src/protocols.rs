//! Multi-pulse sequences that accumulate the pulse-to-pulse phase step, their
//! closed forms, and the Ramsey read-out model used for estimation.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comb::{generate_train, split_delay_interleave, CombSpec, InterleaveOptions, PulseTrain};
use crate::dynamics::{integrate_pulse, rwa_unitary, rwa_unitary_from};
use crate::error::{Error, Result};
use crate::jet::{Jet, JetMatrix};
use crate::linalg::{exp_i_sigma_z, hadamard, pauli_x, sigma_plus, CMatrix, MatrixEntries, Unitary, C64};

/// First-order formulas are flagged once `Nθ` exceeds this.
pub const WEAK_PULSE_LIMIT: f64 = 0.3;

/// Largest list accepted by [`exhaustive_permutation_phase`].
pub const MAX_EXHAUSTIVE_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    /// Weak pulses `θ ≪ 1` on consecutive comb pulses.
    #[serde(rename = "1A")]
    OneA,
    /// `θ ≈ π/2` pulses on consecutive comb pulses.
    #[serde(rename = "1B")]
    OneB,
    /// Weak pulses arriving in delayed pairs.
    #[serde(rename = "2A")]
    TwoA,
    /// `θ ≈ π/2` pulses arriving in delayed pairs.
    #[serde(rename = "2B")]
    TwoB,
    /// Consecutive pulses with an ideal `σ_x` after each.
    #[serde(rename = "phase_ref")]
    PhaseRef,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] =
        [ProtocolKind::OneA, ProtocolKind::OneB, ProtocolKind::TwoA, ProtocolKind::TwoB, ProtocolKind::PhaseRef];

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::OneA => "1A",
            ProtocolKind::OneB => "1B",
            ProtocolKind::TwoA => "2A",
            ProtocolKind::TwoB => "2B",
            ProtocolKind::PhaseRef => "phase_ref",
        }
    }

    pub fn is_paired(self) -> bool {
        matches!(self, ProtocolKind::TwoA | ProtocolKind::TwoB)
    }

    pub fn is_weak(self) -> bool {
        matches!(self, ProtocolKind::OneA | ProtocolKind::TwoA)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    /// Total number of pulses `N` reaching the atom.
    pub pulse_count: u64,
    /// Delay `N_d` in comb periods (paired protocols only).
    #[serde(default)]
    pub delay: u64,
    /// Reference phase `ξ` in `[0, 2π)`.
    #[serde(default)]
    pub reference_phase: f64,
    /// Nominal pulse area `θ`.
    pub rabi_angle: f64,
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, pulse_count: u64, delay: u64, rabi_angle: f64) -> Result<Self> {
        let s = ProtocolSpec { kind, pulse_count, delay, reference_phase: 0.0, rabi_angle };
        s.validate()?;
        Ok(s)
    }

    /// Sets `ξ`, reduced into `[0, 2π)`.
    pub fn with_reference_phase(mut self, xi: f64) -> Self {
        self.reference_phase = xi.rem_euclid(std::f64::consts::TAU);
        if self.reference_phase >= std::f64::consts::TAU {
            self.reference_phase = 0.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulse_count == 0 {
            return Err(Error::InvalidParameter("protocol needs at least one pulse".into()));
        }
        if matches!(self.kind, ProtocolKind::OneB | ProtocolKind::TwoA | ProtocolKind::TwoB)
            && self.pulse_count % 2 != 0
        {
            return Err(Error::OddLength(self.pulse_count as usize));
        }
        if !(0.0..std::f64::consts::TAU).contains(&self.reference_phase) {
            return Err(Error::InvalidParameter("reference phase must lie in [0, 2π)".into()));
        }
        if !(self.rabi_angle.is_finite() && self.rabi_angle >= 0.0) {
            return Err(Error::InvalidParameter("rabi angle must be finite and >= 0".into()));
        }
        if self.kind.is_weak() && self.pulse_count as f64 * self.rabi_angle > WEAK_PULSE_LIMIT {
            log::warn!(
                "protocol {}: Nθ = {:.3} exceeds the weak-pulse regime",
                self.kind,
                self.pulse_count as f64 * self.rabi_angle
            );
        }
        Ok(())
    }

    /// Number of pairs in a paired protocol.
    pub fn pairs(&self) -> u64 {
        self.pulse_count / 2
    }

    /// Multiplier `χ` of `Δφ` in the phase the sequence accumulates. Weak
    /// pulses add up regardless of order, so for 1A and 2A this is twice
    /// the mean pulse index.
    pub fn phase_gain(&self) -> f64 {
        let n = self.pulse_count as f64;
        match self.kind {
            ProtocolKind::OneA => n + 1.0,
            ProtocolKind::OneB => n,
            ProtocolKind::TwoA => 4.0 * paired_index_sum(self.pairs(), self.delay) / n + self.delay as f64,
            ProtocolKind::TwoB => n * self.delay.max(1) as f64,
            ProtocolKind::PhaseRef => n * (n + 1.0),
        }
    }

    /// Phase steps for which the accumulated phase stays unambiguous.
    pub fn unambiguous_half_width(&self) -> f64 {
        std::f64::consts::PI / self.phase_gain()
    }

    pub fn outcome_model(&self) -> Result<RamseyOutcomeModel> {
        ramsey_model(self)
    }
}

/// Sum of the first indices `j` of the pairs `(j, j + D)`.
fn paired_index_sum(pairs: u64, delay: u64) -> f64 {
    let (p, d) = (pairs as f64, delay as f64);
    if delay == 0 {
        return p * (p + 1.0) / 2.0;
    }
    let nb = (pairs / delay) as f64;
    let r = (pairs % delay) as f64;
    // full blocks start at 2Db + 1, then a partial block of r
    d * d * nb * (nb - 1.0) + nb * d * (d + 1.0) / 2.0 + r * 2.0 * d * nb + r * (r + 1.0) / 2.0
}

/// How individual pulse unitaries are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Propagation {
    #[default]
    Rwa,
    Integrated {
        steps_per_cycle: usize,
    },
}

/// `U_N ⋯ U_1` over the train in arrival order.
pub fn compose_train(train: &PulseTrain, propagation: Propagation) -> Result<Unitary> {
    if train.is_empty() {
        return Err(Error::InvalidParameter("cannot compose an empty train".into()));
    }
    let pulses: Vec<_> = train.pulses().collect();
    let unitaries: Vec<Unitary> = match propagation {
        Propagation::Rwa => pulses.iter().map(rwa_unitary).collect::<Result<_>>()?,
        Propagation::Integrated { steps_per_cycle } => {
            pulses.par_iter().map(|p| integrate_pulse(p, steps_per_cycle)).collect::<Result<_>>()?
        }
    };
    let product = unitaries.iter().fold(CMatrix::identity(2), |acc, u| *u.matrix() * acc);
    Unitary::with_tolerance(product, 1e-8)
}

/// Weak-pulse train `φ_m = mΔφ`, `m = 1..N`, to first order in `θ`:
/// `1 + iθ·S·(e^{i(N+1)Δφ}σ⁺ + h.c.)` with `S = sin(NΔφ)/sin(Δφ)`.
///
/// Returned in the exponentiated (unitary) form, which agrees to first order.
pub fn closed_form_1a(rabi_angle: f64, phase_step: f64, n: u64) -> Result<Unitary> {
    if n as f64 * rabi_angle > WEAK_PULSE_LIMIT {
        log::warn!("first-order train formula used with Nθ = {:.3}", n as f64 * rabi_angle);
    }
    let amp = rabi_angle * dirichlet_ratio(phase_step, n);
    let (s, c) = amp.sin_cos();
    let coupling = C64::cis((n as f64 + 1.0) * phase_step);
    let g = sigma_plus().scale(coupling) + sigma_plus().adjoint().scale(coupling.conj());
    let m = CMatrix::identity(2).scale(C64::from(c)) + g.scale(C64::new(0.0, s));
    Unitary::with_tolerance(m, 1e-10)
}

/// First-order matrix `1 + iθ·S·(e^{i(N+1)Δφ}σ⁺ + h.c.)` without exponentiation.
pub fn first_order_1a(rabi_angle: f64, phase_step: f64, n: u64) -> CMatrix {
    let amp = rabi_angle * dirichlet_ratio(phase_step, n);
    let coupling = C64::cis((n as f64 + 1.0) * phase_step);
    let g = sigma_plus().scale(coupling) + sigma_plus().adjoint().scale(coupling.conj());
    CMatrix::identity(2) + g.scale(C64::new(0.0, amp))
}

/// `sin(Nx)/sin(x)`, continuous through the removable zeros of `sin x`.
pub fn dirichlet_ratio(x: f64, n: u64) -> f64 {
    let nf = n as f64;
    let s = x.sin();
    if s.abs() < 1e-8 {
        // sin(x) ≈ 0 at x = kπ: limit is N·cos(Nkπ)/cos(kπ)
        let k = (x / std::f64::consts::PI).round();
        let sign = if (k as i64 * (n as i64 - 1)) % 2 == 0 { 1.0 } else { -1.0 };
        let dx = x - k * std::f64::consts::PI;
        return sign * nf * (1.0 - (nf * nf - 1.0) * dx * dx / 6.0);
    }
    (nf * x).sin() / s
}

/// `π/2` pulses at `φ_m = mΔφ`, `N` even: `(−1)^{N/2} exp(−iNΔφσ_z)`.
pub fn closed_form_1b(phase_step: f64, n: u64) -> Result<Unitary> {
    if n % 2 != 0 {
        return Err(Error::OddLength(n as usize));
    }
    Ok(signed_z_rotation(n / 2, n as f64 * phase_step))
}

/// Delayed `π/2` pairs, `N` pulses, delay `N_d`: `(−1)^{N/2} exp(−iΔφ·N·N_d·σ_z)`.
pub fn closed_form_2b(phase_step: f64, n: u64, delay: u64) -> Result<Unitary> {
    if n % 2 != 0 {
        return Err(Error::OddLength(n as usize));
    }
    Ok(signed_z_rotation(n / 2, phase_step * n as f64 * delay as f64))
}

fn signed_z_rotation(pairs: u64, angle: f64) -> Unitary {
    let u = exp_i_sigma_z(-angle);
    if pairs % 2 == 1 {
        Unitary::from_trusted(u.matrix().scale(C64::from(-1.0)))
    } else {
        u
    }
}

/// Exact unitary of the consecutive train `φ_m = mΔφ`, `m = 1..N`, for any `θ`.
pub fn uniform_train_unitary(rabi_angle: f64, phase_step: f64, n: u64) -> Unitary {
    let m = consecutive_jet(Jet::constant(rabi_angle.into()), Jet::constant(phase_step.into()), n);
    Unitary::from_trusted(m.value())
}

/// Exact unitary of `N/2` delayed pairs `(j, j + N_d)` picked greedily from
/// comb pulses `1, 2, …` as [`split_delay_interleave`] does, for any `θ`.
pub fn paired_train_unitary(rabi_angle: f64, phase_step: f64, n: u64, delay: u64) -> Result<Unitary> {
    if n % 2 != 0 {
        return Err(Error::OddLength(n as usize));
    }
    let m = paired_jet(Jet::constant(rabi_angle.into()), Jet::constant(phase_step.into()), n / 2, delay);
    Ok(Unitary::from_trusted(m.value()))
}

/// `∏ σ_x U_m` over the train, with ideal `σ_x` gates after every pulse.
pub fn phase_reference_sequence(train: &PulseTrain) -> Result<Unitary> {
    if train.is_empty() {
        return Err(Error::InvalidParameter("cannot compose an empty train".into()));
    }
    let x = pauli_x();
    let mut acc = CMatrix::identity(2);
    for e in train.events() {
        acc = x * *rwa_unitary_from(e.rabi_angle, e.phase)?.matrix() * acc;
    }
    Unitary::new(acc)
}

/// `exp(2i Σφ_m σ_z)`, the `θ = π/2` value of [`phase_reference_sequence`]
/// up to the global factor `i^N`.
pub fn phase_reference_closed_form(phases: &[f64]) -> Unitary {
    exp_i_sigma_z(2.0 * phases.iter().sum::<f64>())
}

/// Best single-use rearrangement of `π/2` pulses into pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationOptimum {
    /// Largest `σ_z` phase `2|Σ_k (φ_{second,k} − φ_{first,k})|`.
    pub max_accumulated: f64,
    /// Pulse order achieving it: `(first, second)` of each pair in turn.
    pub witness: Vec<usize>,
}

/// Sorts the phases and pairs the lower half against the upper half.
pub fn optimal_permutation_phase(phases: &[f64]) -> Result<PermutationOptimum> {
    check_even(phases)?;
    let mut order: Vec<usize> = (0..phases.len()).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    let half = phases.len() / 2;
    let witness: Vec<usize> = (0..half).flat_map(|k| [order[k], order[k + half]]).collect();
    Ok(PermutationOptimum { max_accumulated: paired_phase(phases, &witness).abs(), witness })
}

/// Searches every pairing and orientation. Lists up to
/// [`MAX_EXHAUSTIVE_LEN`] entries.
pub fn exhaustive_permutation_phase(phases: &[f64]) -> Result<PermutationOptimum> {
    check_even(phases)?;
    if phases.len() > MAX_EXHAUSTIVE_LEN {
        return Err(Error::InvalidParameter(format!("exhaustive search limited to {MAX_EXHAUSTIVE_LEN} phases")));
    }
    let mut best = PermutationOptimum { max_accumulated: -1.0, witness: Vec::new() };
    let mut remaining: Vec<usize> = (0..phases.len()).collect();
    let mut current = Vec::with_capacity(phases.len());
    search_pairings(phases, &mut remaining, &mut current, &mut best);
    Ok(best)
}

fn search_pairings(
    phases: &[f64],
    remaining: &mut Vec<usize>,
    current: &mut Vec<usize>,
    best: &mut PermutationOptimum,
) {
    if remaining.is_empty() {
        // every orientation of the fixed pairing
        let pairs = current.len() / 2;
        for mask in 0u32..(1 << pairs) {
            let mut order = current.clone();
            for k in 0..pairs {
                if mask & (1 << k) != 0 {
                    order.swap(2 * k, 2 * k + 1);
                }
            }
            let v = paired_phase(phases, &order).abs();
            if v > best.max_accumulated {
                *best = PermutationOptimum { max_accumulated: v, witness: order };
            }
        }
        return;
    }
    let first = remaining.remove(0);
    for k in 0..remaining.len() {
        let partner = remaining.remove(k);
        current.push(first);
        current.push(partner);
        search_pairings(phases, remaining, current, best);
        current.truncate(current.len() - 2);
        remaining.insert(k, partner);
    }
    remaining.insert(0, first);
}

/// `2 Σ_k (φ_{order[2k+1]} − φ_{order[2k]})`.
pub fn paired_phase(phases: &[f64], order: &[usize]) -> f64 {
    2.0 * order.chunks_exact(2).map(|p| phases[p[1]] - phases[p[0]]).sum::<f64>()
}

fn check_even(phases: &[f64]) -> Result<()> {
    if phases.len() % 2 != 0 {
        return Err(Error::OddLength(phases.len()));
    }
    Ok(())
}

/// Pulse train that realizes a protocol on a given comb, starting at comb
/// pulse 1. Paired protocols use `pair_gap` inside each pair.
pub fn protocol_train(comb: &CombSpec, spec: &ProtocolSpec, pair_gap: f64) -> Result<PulseTrain> {
    spec.validate()?;
    let mut comb = *comb;
    comb.template.rabi_angle = spec.rabi_angle;
    if spec.kind.is_paired() {
        let pairs = spec.pairs() as usize;
        let d = spec.delay as usize;
        let span = if d == 0 { pairs } else { 2 * d * pairs.div_ceil(d) };
        let source = generate_train(&comb, span, 1)?;
        let opts = InterleaveOptions::new(d).with_pairs(pairs).with_gap(pair_gap);
        split_delay_interleave(&source, opts)
    } else {
        generate_train(&comb, spec.pulse_count as usize, 1)
    }
}

/// Serialized summary of a composed protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub kind: ProtocolKind,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "N_d")]
    pub n_d: u64,
    pub xi: f64,
    pub phase_step: f64,
    /// `χ·Δφ`, the phase the ideal sequence accumulates.
    pub accumulated_phase: f64,
    pub unitary: MatrixEntries,
}

impl ProtocolResult {
    pub fn evaluate(spec: &ProtocolSpec, phase_step: f64) -> Result<Self> {
        let model = ramsey_model(spec)?;
        let u = model.total_unitary(spec.rabi_angle, phase_step);
        Ok(ProtocolResult {
            kind: spec.kind,
            n: spec.pulse_count,
            n_d: spec.delay,
            xi: spec.reference_phase,
            phase_step,
            accumulated_phase: spec.phase_gain() * phase_step,
            unitary: MatrixEntries::from(u.matrix()),
        })
    }
}

/// Outcome probabilities of both measurement arms with gradients in `(θ, Δφ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcomes {
    /// `P1(s)` for `s = 0, 1` (arm with Hadamard gates).
    pub p1: [f64; 2],
    /// `P2(s)` (arm without Hadamard gates).
    pub p2: [f64; 2],
    /// `∂P1(s)/∂k` indexed `[s][k]`, `k = 0` for `θ`, `1` for `Δφ`.
    pub grad_p1: [[f64; 2]; 2],
    pub grad_p2: [[f64; 2]; 2],
}

impl Outcomes {
    pub fn arm(&self, arm: Arm) -> ([f64; 2], [[f64; 2]; 2]) {
        match arm {
            Arm::Ramsey => (self.p1, self.grad_p1),
            Arm::Direct => (self.p2, self.grad_p2),
        }
    }
}

/// The two measurement arms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Hadamard, reference phase, sequence, Hadamard.
    Ramsey,
    /// Sequence only.
    Direct,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Ramsey, Arm::Direct];
}

/// `P1(s|θ,Δφ) = |⟨s|U_H U_tot D_ξ U_H|0⟩|²` and `P2(s|θ,Δφ) = |⟨s|U_tot|0⟩|²`
/// with `D_ξ = diag(1, e^{iξ})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamseyOutcomeModel {
    spec: ProtocolSpec,
    absolute_phase: AbsolutePhase,
}

/// Relation between the comb's absolute CEO phase `φ_0` and the lasers
/// driving the Hadamard gates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsolutePhase {
    /// `φ_0 = 0` in the frame of the gates.
    #[default]
    Locked,
    /// `φ_0` uniformly random from shot to shot; outcomes are averaged over it.
    Random,
}

/// Sample points that average `P(φ_0)` exactly: amplitudes carry at most
/// `e^{±2iφ_0}`, so probabilities are trigonometric polynomials of degree 4.
const ABSOLUTE_PHASE_NODES: usize = 8;

pub fn ramsey_model(spec: &ProtocolSpec) -> Result<RamseyOutcomeModel> {
    spec.validate()?;
    Ok(RamseyOutcomeModel { spec: *spec, absolute_phase: AbsolutePhase::Locked })
}

impl RamseyOutcomeModel {
    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn with_reference_phase(&self, xi: f64) -> Self {
        RamseyOutcomeModel { spec: self.spec.with_reference_phase(xi), ..*self }
    }

    pub fn with_absolute_phase(&self, absolute_phase: AbsolutePhase) -> Self {
        RamseyOutcomeModel { absolute_phase, ..*self }
    }

    pub fn absolute_phase(&self) -> AbsolutePhase {
        self.absolute_phase
    }

    fn sequence(&self, theta: Jet, dphi: Jet) -> JetMatrix {
        let n = self.spec.pulse_count;
        match self.spec.kind {
            ProtocolKind::OneA | ProtocolKind::OneB => consecutive_jet(theta, dphi, n),
            ProtocolKind::TwoA | ProtocolKind::TwoB => paired_jet(theta, dphi, n / 2, self.spec.delay),
            ProtocolKind::PhaseRef => phase_ref_jet(theta, dphi, n),
        }
    }

    /// `U_tot(θ, Δφ)` of the pulse sequence alone.
    pub fn total_unitary(&self, theta: f64, phase_step: f64) -> Unitary {
        let m = self.sequence(Jet::constant(theta.into()), Jet::constant(phase_step.into()));
        Unitary::from_trusted(m.value())
    }

    pub fn evaluate(&self, theta: f64, phase_step: f64) -> Outcomes {
        let u = self.sequence(Jet::variable(theta, 0), Jet::variable(phase_step, 1));
        match self.absolute_phase {
            AbsolutePhase::Locked => self.outcomes(&u),
            AbsolutePhase::Random => {
                let w = 1.0 / ABSOLUTE_PHASE_NODES as f64;
                let mut acc = Outcomes { p1: [0.0; 2], p2: [0.0; 2], grad_p1: [[0.0; 2]; 2], grad_p2: [[0.0; 2]; 2] };
                for j in 0..ABSOLUTE_PHASE_NODES {
                    let phi0 = Jet::constant(C64::from(std::f64::consts::PI * j as f64 * w));
                    let o = self.outcomes(&(z(-phi0) * u * z(phi0)));
                    for s in 0..2 {
                        acc.p1[s] += w * o.p1[s];
                        acc.p2[s] += w * o.p2[s];
                        for k in 0..2 {
                            acc.grad_p1[s][k] += w * o.grad_p1[s][k];
                            acc.grad_p2[s][k] += w * o.grad_p2[s][k];
                        }
                    }
                }
                acc
            }
        }
    }

    fn outcomes(&self, u: &JetMatrix) -> Outcomes {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let col = |r: usize| u.get(r, 0);
        let c1 = |r: usize| u.get(r, 1) * C64::cis(self.spec.reference_phase);

        // U_tot D_ξ U_H |0⟩
        let mid = [(col(0) + c1(0)).scale(h), (col(1) + c1(1)).scale(h)];
        // then U_H
        let ramsey = [(mid[0] + mid[1]).scale(h), (mid[0] - mid[1]).scale(h)];
        let direct = [col(0), col(1)];

        let probs = |amps: [Jet; 2]| {
            let (p0, g0) = amps[0].norm_sqr();
            let (p1, g1) = amps[1].norm_sqr();
            ([p0, p1], [g0, g1])
        };
        let (p1, grad_p1) = probs(ramsey);
        let (p2, grad_p2) = probs(direct);
        Outcomes { p1, p2, grad_p1, grad_p2 }
    }
}

fn z(angle: Jet) -> JetMatrix {
    JetMatrix::exp_i_sigma_z(angle)
}

fn int(k: i64) -> Jet {
    Jet::constant(C64::from(k as f64))
}

/// `e^{−iNΔφσ_z} (U_0 e^{iΔφσ_z})^N`.
fn consecutive_jet(theta: Jet, dphi: Jet, n: u64) -> JetMatrix {
    let u0 = JetMatrix::exp_i_sigma_x(theta);
    z(-(int(n as i64) * dphi)) * (u0 * z(dphi)).pow(n)
}

/// Pairs `(j, j + D)` for `j` in blocks `1..=D`, `2D+1..=3D`, … (`D = 0`:
/// `j = 1, 2, …` each with its copy). The pair product is
/// `e^{−i(j+D)Δφσ_z} A e^{ijΔφσ_z}` with `A = U_0 e^{iDΔφσ_z} U_0`.
fn paired_jet(theta: Jet, dphi: Jet, pairs: u64, delay: u64) -> JetMatrix {
    let u0 = JetMatrix::exp_i_sigma_x(theta);
    let d = delay as i64;
    let a = u0 * z(int(d) * dphi) * u0;
    let (inner, last_j) = if delay == 0 {
        (a * (z(dphi) * a).pow(pairs - 1), pairs as i64)
    } else {
        let g = z(int(1 - d) * dphi) * a;
        let full = delay.min(pairs);
        let nb = pairs / delay;
        let r = pairs % delay;
        let block = a * g.pow(full - 1);
        let hop = z(dphi);
        if r > 0 {
            let partial = a * g.pow(r - 1);
            (partial * (hop * block).pow(nb), 2 * d * nb as i64 + r as i64)
        } else {
            (block * (hop * block).pow(nb - 1), 2 * d * (nb as i64 - 1) + d)
        }
    };
    z(-(int(last_j + d) * dphi)) * inner * z(dphi)
}

/// `∏_{m=1}^{N} σ_x U_m`.
fn phase_ref_jet(theta: Jet, dphi: Jet, n: u64) -> JetMatrix {
    let u0 = JetMatrix::exp_i_sigma_x(theta);
    let x = JetMatrix::constant(&pauli_x());
    let mut acc = JetMatrix::identity();
    for m in 1..=n as i64 {
        let phi = int(m) * dphi;
        acc = x * z(-phi) * u0 * z(phi) * acc;
    }
    acc
}

/// `U_H U D_ξ U_H`, the full Ramsey-arm unitary for a given sequence.
pub fn ramsey_wrap(sequence: &Unitary, xi: f64) -> Unitary {
    let h = hadamard();
    h * *sequence * crate::linalg::reference_phase_gate(xi) * h
}
