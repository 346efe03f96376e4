//! Fisher information, Cramér-Rao bounds and maximum-likelihood estimation of
//! `(θ, Δφ)` from Ramsey measurement records, plus the sensitivity scans and
//! the staged refinement loop built on them.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comb::CombSpec;
use crate::error::{Error, Result};
use crate::protocols::{ramsey_model, Arm, ProtocolKind, ProtocolSpec, RamseyOutcomeModel};

/// Index of `θ` in parameter vectors.
pub const THETA: usize = 0;
/// Index of `Δφ` in parameter vectors.
pub const PHASE: usize = 1;

/// Probabilities are clipped at this floor inside the likelihood only.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Default `ξ` grid resolution.
pub const XI_GRID_POINTS: usize = 256;

/// Closest approach of the Ramsey-arm probability to 0 or 1 allowed when
/// choosing `ξ`.
pub const FRINGE_MARGIN: f64 = 0.1;

const VANISHING_PROBABILITY: f64 = 1e-14;
const VANISHING_GRADIENT: f64 = 1e-7;
const RANK_TOL: f64 = 1e-10;
const EDGE_FRACTION: f64 = 1e-3;
/// Coarse grid cells per coordinate window before golden section.
const BRACKET_POINTS: usize = 32;

/// Parameter point `k = (θ, Δφ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta: f64,
    pub phase_step: f64,
}

impl Params {
    pub fn new(theta: f64, phase_step: f64) -> Self {
        Params { theta, phase_step }
    }

    fn get(&self, i: usize) -> f64 {
        [self.theta, self.phase_step][i]
    }

    fn with(mut self, i: usize, v: f64) -> Self {
        if i == THETA {
            self.theta = v;
        } else {
            self.phase_step = v;
        }
        self
    }
}

/// Symmetric positive semidefinite 2×2 information matrix over `(θ, Δφ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix([[f64; 2]; 2]);

impl FisherMatrix {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        let scale = m[0][0].abs().max(m[1][1].abs()).max(1e-300);
        if (m[0][1] - m[1][0]).abs() > 1e-9 * scale {
            return Err(Error::InvalidParameter("Fisher matrix must be symmetric".into()));
        }
        let f = FisherMatrix([[m[0][0], 0.5 * (m[0][1] + m[1][0])], [0.5 * (m[0][1] + m[1][0]), m[1][1]]]);
        let (lo, _) = f.eigenvalues();
        if lo < -1e-12 * scale.max(1.0) {
            return Err(Error::InvalidParameter(format!("Fisher matrix not PSD (eigenvalue {lo:.3e})")));
        }
        Ok(f)
    }

    pub fn identity() -> Self {
        FisherMatrix([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [_, d]] = self.0;
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean - r, mean + r)
    }

    /// Rank-deficient when the smaller eigenvalue is negligible against the larger.
    pub fn is_singular(&self) -> bool {
        let (lo, hi) = self.eigenvalues();
        hi <= 0.0 || lo <= RANK_TOL * hi
    }

    pub fn scaled(&self, s: f64) -> Self {
        FisherMatrix(self.0.map(|r| r.map(|x| x * s)))
    }

    /// Information on `Δφ` left after `θ` is profiled out, `1/J_ΔφΔφ`.
    pub fn efficient_phase_information(&self) -> f64 {
        if self.0[0][0] <= 0.0 {
            return self.0[1][1];
        }
        (self.0[1][1] - self.0[0][1] * self.0[0][1] / self.0[0][0]).max(0.0)
    }

    /// Moore-Penrose pseudo-inverse.
    pub fn pseudo_inverse(&self) -> [[f64; 2]; 2] {
        if !self.is_singular() {
            let det = self.determinant();
            let [[a, b], [c, d]] = self.0;
            return [[d / det, -b / det], [-c / det, a / det]];
        }
        let (_, hi) = self.eigenvalues();
        if hi <= 0.0 {
            return [[0.0; 2]; 2];
        }
        // rank one: v vᵀ / λ
        let [[a, b], [_, d]] = self.0;
        let (vx, vy) = if b.abs() > 1e-300 {
            (b, hi - a)
        } else if a >= d {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n2 = vx * vx + vy * vy;
        [[vx * vx / n2 / hi, vx * vy / n2 / hi], [vx * vy / n2 / hi, vy * vy / n2 / hi]]
    }
}

/// Per-parameter variance bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CramerRao {
    /// `J_rr`, diagonal of the (pseudo-)inverse Fisher matrix.
    pub variances: [f64; 2],
    /// The matrix was singular and the pseudo-inverse was used.
    pub singular: bool,
}

impl CramerRao {
    pub fn phase_sigma(&self) -> f64 {
        self.variances[PHASE].sqrt()
    }

    pub fn theta_sigma(&self) -> f64 {
        self.variances[THETA].sqrt()
    }
}

pub fn crlb(f: &FisherMatrix) -> CramerRao {
    let inv = f.pseudo_inverse();
    CramerRao { variances: [inv[0][0], inv[1][1]], singular: f.is_singular() }
}

/// Fisher matrix of `shots` repetitions of each listed arm.
pub fn fisher_matrix_for(model: &RamseyOutcomeModel, k: Params, shots: u64, arms: &[Arm]) -> Result<FisherMatrix> {
    let o = model.evaluate(k.theta, k.phase_step);
    let mut m = [[0.0; 2]; 2];
    for &arm in arms {
        let (p, g) = o.arm(arm);
        for s in 0..2 {
            let grad_norm = g[s][0].hypot(g[s][1]);
            if p[s] <= VANISHING_PROBABILITY {
                // an exact zero with a slope is a kink the bound cannot handle;
                // anything else this small is rounding on a dark outcome
                if p[s] == 0.0 && grad_norm > VANISHING_GRADIENT {
                    return Err(Error::SingularInformation);
                }
                continue;
            }
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += shots as f64 * g[s][i] * g[s][j] / p[s];
                }
            }
        }
    }
    FisherMatrix::new(m)
}

/// Fisher matrix of the combined two-arm experiment with `shots` atoms per arm.
pub fn fisher_matrix(model: &RamseyOutcomeModel, k: Params, shots: u64) -> Result<FisherMatrix> {
    fisher_matrix_for(model, k, shots, &Arm::BOTH)
}

/// Score `∂_k ln P(s)` of a single outcome.
pub fn score(model: &RamseyOutcomeModel, k: Params, arm: Arm, outcome: usize) -> Result<[f64; 2]> {
    let (p, g) = model.evaluate(k.theta, k.phase_step).arm(arm);
    if p[outcome] <= 0.0 {
        return Err(Error::SingularInformation);
    }
    Ok([g[outcome][0] / p[outcome], g[outcome][1] / p[outcome]])
}

/// Outcome counts `[n(s=0), n(s=1)]` per arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// Atoms `M` per arm.
    pub shots: u64,
    pub ramsey: Option<[u64; 2]>,
    pub direct: Option<[u64; 2]>,
}

impl MeasurementRecord {
    pub fn new(shots: u64, ramsey: Option<[u64; 2]>, direct: Option<[u64; 2]>) -> Result<Self> {
        for c in [ramsey, direct].into_iter().flatten() {
            if c[0] + c[1] != shots {
                return Err(Error::InvalidParameter(format!("counts {} + {} do not sum to {shots} shots", c[0], c[1])));
            }
        }
        if ramsey.is_none() && direct.is_none() {
            return Err(Error::InvalidParameter("record has no measurement arm".into()));
        }
        Ok(MeasurementRecord { shots, ramsey, direct })
    }

    pub fn counts(&self, arm: Arm) -> Option<[u64; 2]> {
        match arm {
            Arm::Ramsey => self.ramsey,
            Arm::Direct => self.direct,
        }
    }

    pub fn arms(&self) -> Vec<Arm> {
        Arm::BOTH.into_iter().filter(|&a| self.counts(a).is_some()).collect()
    }

    /// Same record restricted to one arm.
    pub fn only(&self, arm: Arm) -> Result<Self> {
        match arm {
            Arm::Ramsey => MeasurementRecord::new(self.shots, self.ramsey, None),
            Arm::Direct => MeasurementRecord::new(self.shots, None, self.direct),
        }
    }
}

/// Binomial draws for both arms, reproducible from `seed`.
pub fn sample_record(model: &RamseyOutcomeModel, k: Params, shots: u64, seed: u64) -> Result<MeasurementRecord> {
    let o = model.evaluate(k.theta, k.phase_step);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |p1: f64| -> Result<[u64; 2]> {
        let b =
            Binomial::new(shots, p1.clamp(0.0, 1.0)).map_err(|e| Error::InvalidParameter(format!("binomial: {e}")))?;
        let ones = b.sample(&mut rng);
        Ok([shots - ones, ones])
    };
    let ramsey = draw(o.p1[1])?;
    let direct = draw(o.p2[1])?;
    MeasurementRecord::new(shots, Some(ramsey), Some(direct))
}

/// Record whose frequencies equal the model probabilities (rounded).
pub fn expected_record(model: &RamseyOutcomeModel, k: Params, shots: u64) -> Result<MeasurementRecord> {
    let o = model.evaluate(k.theta, k.phase_step);
    let split = |p1: f64| {
        let ones = (p1.clamp(0.0, 1.0) * shots as f64).round() as u64;
        [shots - ones, ones]
    };
    MeasurementRecord::new(shots, Some(split(o.p1[1])), Some(split(o.p2[1])))
}

/// `Σ n_s ln max(P_s, floor)` over the record's arms.
pub fn log_likelihood(record: &MeasurementRecord, model: &RamseyOutcomeModel, k: Params) -> f64 {
    let o = model.evaluate(k.theta, k.phase_step);
    let mut ll = 0.0;
    for arm in Arm::BOTH {
        if let Some(c) = record.counts(arm) {
            let (p, _) = o.arm(arm);
            for s in 0..2 {
                if c[s] > 0 {
                    ll += c[s] as f64 * p[s].max(PROBABILITY_FLOOR).ln();
                }
            }
        }
    }
    ll
}

fn score_sum(record: &MeasurementRecord, model: &RamseyOutcomeModel, k: Params) -> [f64; 2] {
    let o = model.evaluate(k.theta, k.phase_step);
    let mut g = [0.0; 2];
    for arm in Arm::BOTH {
        if let Some(c) = record.counts(arm) {
            let (p, dp) = o.arm(arm);
            for s in 0..2 {
                if c[s] > 0 {
                    let ps = p[s].max(PROBABILITY_FLOOR);
                    g[0] += c[s] as f64 * dp[s][0] / ps;
                    g[1] += c[s] as f64 * dp[s][1] / ps;
                }
            }
        }
    }
    g
}

/// Whether `θ` is estimated jointly or taken as calibrated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Fit,
    Known,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub theta_mode: ThetaMode,
    /// Half-width of the `Δφ` search window; default `π/(4χ)`.
    pub phase_window: Option<f64>,
    /// Half-width of the `θ` search window; default `π/(8N)`, or `θ/2` for weak pulses.
    pub theta_window: Option<f64>,
    /// Coordinate-search sweeps before the joint polish.
    pub sweeps: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { theta_mode: ThetaMode::Fit, phase_window: None, theta_window: None, sweeps: 3 }
    }
}

impl EstimateOptions {
    pub fn known_theta() -> Self {
        EstimateOptions { theta_mode: ThetaMode::Known, ..Default::default() }
    }

    fn phase_half_width(&self, spec: &ProtocolSpec) -> f64 {
        self.phase_window.unwrap_or(PI / (4.0 * spec.phase_gain()))
    }

    fn theta_half_width(&self, spec: &ProtocolSpec, theta: f64) -> f64 {
        self.theta_window.unwrap_or(if spec.kind.is_weak() {
            0.5 * theta
        } else {
            PI / (8.0 * spec.pulse_count as f64)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta: f64,
    pub phase_step: f64,
    pub theta_fitted: bool,
    /// Inverse Fisher matrix at the estimate (fitted parameters only).
    pub covariance: [[f64; 2]; 2],
    pub fisher: FisherMatrix,
    /// Bounds `J_rr` at the estimate.
    pub crlb: CramerRao,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimationResult {
    pub fn params(&self) -> Params {
        Params::new(self.theta, self.phase_step)
    }
}

/// Maximizes the joint log-likelihood of `record` around `init`.
///
/// Golden-section sweeps over each coordinate inside its window are followed
/// by Fisher-scoring steps. An estimate pinned to a window edge means the
/// accumulated phase may have wrapped and is reported as an ambiguity.
pub fn ml_estimate(
    record: &MeasurementRecord,
    model: &RamseyOutcomeModel,
    init: Params,
    opts: &EstimateOptions,
) -> Result<EstimationResult> {
    let spec = model.spec();
    let fit_theta = opts.theta_mode == ThetaMode::Fit;
    let arms = record.arms();
    let shots = record.shots;

    let info0 = fisher_matrix_for(model, init, shots, &arms)?;
    if fit_theta && info0.is_singular() {
        return Err(Error::DegenerateFit(format!(
            "θ and Δφ are not jointly identifiable from arms {arms:?} (eigenvalues {:?})",
            info0.eigenvalues()
        )));
    }
    if info0.get(PHASE, PHASE) <= 0.0 {
        return Err(Error::DegenerateFit("record carries no information on Δφ".into()));
    }

    let pw = opts.phase_half_width(spec);
    let tw = opts.theta_half_width(spec, init.theta);
    let bounds = [(init.theta - tw, init.theta + tw), (init.phase_step - pw, init.phase_step + pw)];
    let ll = |k: Params| log_likelihood(record, model, k);

    let mut k = init;
    let mut iterations = 0;
    let coords: &[usize] = if fit_theta { &[PHASE, THETA] } else { &[PHASE] };
    for _ in 0..opts.sweeps.max(1) {
        for &i in coords {
            let (lo, hi) = climb_bracket(|x| ll(k.with(i, x)), bounds[i].0, bounds[i].1, k.get(i));
            let (x, evals) = golden_section_max(|x| ll(k.with(i, x)), lo, hi, 1e-13 * (hi - lo).max(1e-300));
            k = k.with(i, x);
            iterations += evals;
        }
    }

    // Fisher scoring with step halving
    let mut converged = false;
    for _ in 0..50 {
        iterations += 1;
        let g = score_sum(record, model, k);
        let f = match fisher_matrix_for(model, k, shots, &arms) {
            Ok(f) => f,
            Err(_) => break,
        };
        let step = if fit_theta {
            let inv = f.pseudo_inverse();
            [inv[0][0] * g[0] + inv[0][1] * g[1], inv[1][0] * g[0] + inv[1][1] * g[1]]
        } else {
            [0.0, g[1] / f.get(PHASE, PHASE)]
        };
        let base = ll(k);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let trial = Params::new(k.theta + t * step[0], k.phase_step + t * step[1]);
            let inside = (0..2).all(|i| trial.get(i) >= bounds[i].0 && trial.get(i) <= bounds[i].1);
            if inside && ll(trial) >= base {
                k = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        let size = (step[0] * t).abs().max((step[1] * t).abs());
        let scale = pw.min(if fit_theta { tw } else { f64::INFINITY });
        if !moved || size < 1e-13 * scale {
            converged = true;
            break;
        }
    }

    for &i in coords {
        let (lo, hi) = bounds[i];
        let margin = EDGE_FRACTION * (hi - lo);
        let v = k.get(i);
        // an edge that beats the local maximum means the likelihood keeps
        // rising out of the window
        let best = ll(k);
        let edge_wins = ll(k.with(i, lo)) > best || ll(k.with(i, hi)) > best;
        if v - lo < margin || hi - v < margin || edge_wins {
            let name = if i == PHASE { "Δφ" } else { "θ" };
            return Err(Error::Ambiguity(format!(
                "{name} estimate {v:.6e} is not interior to the search window [{lo:.6e}, {hi:.6e}]; \
                 reduce N or refine iteratively"
            )));
        }
    }

    let fisher = fisher_matrix_for(model, k, shots, &arms)?;
    let (covariance, bound) = if fit_theta {
        (fisher.pseudo_inverse(), crlb(&fisher))
    } else {
        let ipp = fisher.get(PHASE, PHASE);
        let v = if ipp > 0.0 { 1.0 / ipp } else { f64::INFINITY };
        ([[0.0, 0.0], [0.0, v]], CramerRao { variances: [0.0, v], singular: ipp <= 0.0 })
    };
    Ok(EstimationResult {
        theta: k.theta,
        phase_step: k.phase_step,
        theta_fitted: fit_theta,
        covariance,
        fisher,
        crlb: bound,
        log_likelihood: ll(k),
        iterations,
        converged,
    })
}

/// Grid cell pair around the local maximum reached by climbing a coarse
/// grid on `[lo, hi]` from `start`. A fringe extremum inside the window
/// makes the likelihood bimodal; the lobe holding the starting point is
/// kept rather than a mirror solution elsewhere in the window.
fn climb_bracket<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, start: f64) -> (f64, f64) {
    let h = (hi - lo) / BRACKET_POINTS as f64;
    let at = |j: usize| lo + j as f64 * h;
    let mut j = (((start - lo) / h).round().max(0.0) as usize).min(BRACKET_POINTS);
    let mut v = f(at(j));
    loop {
        let left = if j > 0 { f(at(j - 1)) } else { f64::NEG_INFINITY };
        let right = if j < BRACKET_POINTS { f(at(j + 1)) } else { f64::NEG_INFINITY };
        if left > v && left >= right {
            j -= 1;
            v = left;
        } else if right > v {
            j += 1;
            v = right;
        } else {
            break;
        }
    }
    (at(j.saturating_sub(1)), at((j + 1).min(BRACKET_POINTS)))
}

/// Golden-section maximization on `[lo, hi]`; returns the argmax and the
/// number of evaluations.
fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, usize) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    // the best point seen so far, endpoints included, so a maximum on the
    // boundary or next to an excluded region is not lost
    let mut best = (lo, f64::NEG_INFINITY);
    let mut eval = |x: f64| {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
        fx
    };
    eval(lo);
    eval(hi);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    let mut evals = 4;
    while (b - a).abs() > tol && evals < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
        evals += 1;
    }
    eval(0.5 * (a + b));
    (best.0, evals + 1)
}

/// Information on `Δφ` used to rank reference phases.
fn phase_information(model: &RamseyOutcomeModel, k: Params, shots: u64, mode: ThetaMode) -> Option<f64> {
    let f = fisher_matrix(model, k, shots).ok()?;
    Some(match mode {
        ThetaMode::Fit => f.efficient_phase_information(),
        ThetaMode::Known => f.get(PHASE, PHASE),
    })
}

/// Reference phase maximizing the `Δφ` information at `k`, found on a
/// uniform grid and refined by golden section. Near-ties go to the `ξ`
/// whose Ramsey fringe sits closest to `P1 = 1/2`.
///
/// Reference phases that park the Ramsey arm within [`FRINGE_MARGIN`] of a
/// dark or bright fringe are excluded whenever any other choice exists:
/// there the information stays finite but the likelihood is quadratic in
/// `Δφ`, the sign of the step is lost and finite samples fall far short of
/// the bound.
pub fn optimize_reference_phase(
    model: &RamseyOutcomeModel,
    k: Params,
    shots: u64,
    mode: ThetaMode,
    grid_points: usize,
) -> Result<(f64, f64)> {
    let grid_points = grid_points.max(8);
    let step = TAU / grid_points as f64;
    let scored: Vec<(f64, f64, f64)> = (0..grid_points)
        .filter_map(|i| {
            let xi = i as f64 * step;
            let m = model.with_reference_phase(xi);
            let info = phase_information(&m, k, shots, mode)?;
            let p = m.evaluate(k.theta, k.phase_step).p1[0];
            Some((xi, info, (p - 0.5).abs()))
        })
        .collect();
    let in_band = |dist: f64| dist <= 0.5 - FRINGE_MARGIN;
    let banded = scored.iter().any(|s| in_band(s.2));
    let allowed = |dist: f64| !banded || in_band(dist);
    let best_info = scored.iter().filter(|s| allowed(s.2)).map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if !(best_info > 0.0) {
        return Err(Error::DegenerateFit("no reference phase gives information on Δφ".into()));
    }
    let &(xi0, _, _) = scored
        .iter()
        .filter(|s| allowed(s.2) && s.1 >= best_info * (1.0 - 1e-6))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("nonempty");

    let objective = |xi: f64| -> f64 {
        let m = model.with_reference_phase(xi);
        let dist = (m.evaluate(k.theta, k.phase_step).p1[0] - 0.5).abs();
        if !allowed(dist) {
            return f64::NEG_INFINITY;
        }
        let info = phase_information(&m, k, shots, mode).unwrap_or(f64::NEG_INFINITY);
        // same tie-break as on the grid, as a tiny penalty
        info - 1e-9 * best_info * dist
    };
    let (xi, _) = golden_section_max(objective, xi0 - step, xi0 + step, 1e-10);
    let value = objective(xi);
    let xi = xi.rem_euclid(TAU);
    let info = phase_information(&model.with_reference_phase(xi), k, shots, mode).unwrap_or(0.0);
    if value.is_finite() && info >= best_info * (1.0 - 1e-6) {
        Ok((xi, info))
    } else {
        Ok((xi0, best_info))
    }
}

/// Empirical spread of repeated estimates against the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub seeds: usize,
    pub failures: usize,
    pub mean_phase: f64,
    pub var_phase: f64,
    pub mean_theta: f64,
    pub var_theta: f64,
    /// `J_ΔφΔφ` at the true point.
    pub crlb_phase: f64,
    pub crlb_theta: f64,
}

impl MonteCarloSummary {
    /// Empirical over bound variance of `Δφ̂`.
    pub fn phase_ratio(&self) -> f64 {
        self.var_phase / self.crlb_phase
    }

    /// Three standard errors of a sample-variance ratio from `S` estimates.
    pub fn ratio_slack(&self) -> f64 {
        let n = (self.seeds - self.failures) as f64;
        3.0 * (2.0 / (n - 1.0)).sqrt()
    }
}

/// Estimates `k_true` from records drawn with `seeds`, in parallel. The
/// reduction runs in seed order so results do not depend on thread count.
pub fn monte_carlo(
    model: &RamseyOutcomeModel,
    k_true: Params,
    shots: u64,
    seeds: &[u64],
    opts: &EstimateOptions,
) -> Result<MonteCarloSummary> {
    let estimates: Vec<Option<Params>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Option<Params>> {
            let rec = sample_record(model, k_true, shots, seed)?;
            match ml_estimate(&rec, model, k_true, opts) {
                Ok(r) => Ok(Some(r.params())),
                Err(Error::Ambiguity(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<Params> = estimates.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(Error::DegenerateFit("fewer than two successful estimates".into()));
    }
    let n = ok.len() as f64;
    let mean_phase = ok.iter().map(|p| p.phase_step).sum::<f64>() / n;
    let mean_theta = ok.iter().map(|p| p.theta).sum::<f64>() / n;
    let var_phase = ok.iter().map(|p| (p.phase_step - mean_phase).powi(2)).sum::<f64>() / (n - 1.0);
    let var_theta = ok.iter().map(|p| (p.theta - mean_theta).powi(2)).sum::<f64>() / (n - 1.0);
    let info = fisher_matrix(model, k_true, shots)?;
    let (crlb_phase, crlb_theta) = match opts.theta_mode {
        ThetaMode::Fit => {
            let b = crlb(&info);
            (b.variances[PHASE], b.variances[THETA])
        }
        ThetaMode::Known => (1.0 / info.get(PHASE, PHASE), 0.0),
    };
    Ok(MonteCarloSummary {
        seeds: seeds.len(),
        failures: seeds.len() - ok.len(),
        mean_phase,
        var_phase,
        mean_theta,
        var_theta,
        crlb_phase,
        crlb_theta,
    })
}

/// Where a scan places the true parameters for a given `(N, N_d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanDesign {
    /// `θ = π/2 + a/N` for strong pulses, `θ = a/N` for weak ones.
    pub theta_offset: f64,
    /// `Δφ = b/χ`.
    pub phase_fraction: f64,
}

impl Default for ScanDesign {
    fn default() -> Self {
        ScanDesign { theta_offset: 0.6, phase_fraction: 0.3 }
    }
}

impl ScanDesign {
    pub fn point(&self, spec: &ProtocolSpec) -> Params {
        let n = spec.pulse_count as f64;
        let theta = if spec.kind.is_weak() { self.theta_offset / n } else { FRAC_PI_2 + self.theta_offset / n };
        Params::new(theta, self.phase_fraction / spec.phase_gain())
    }
}

/// Regressor of a log-log sensitivity fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    PulseCount,
    Delay,
    /// `N·N_d`.
    Product,
}

impl ScanAxis {
    fn value(self, n: u64, n_d: u64) -> f64 {
        match self {
            ScanAxis::PulseCount => n as f64,
            ScanAxis::Delay => n_d as f64,
            ScanAxis::Product => n as f64 * n_d as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub kind: ProtocolKind,
    /// `(N, N_d)` points.
    pub points: Vec<(u64, u64)>,
    pub shots: u64,
    pub seeds: usize,
    pub base_seed: u64,
    pub design: ScanDesign,
    pub theta_mode: ThetaMode,
    pub axis: ScanAxis,
}

impl ScanConfig {
    pub fn new(kind: ProtocolKind, points: Vec<(u64, u64)>, shots: u64, seeds: usize) -> Self {
        let axis = match kind {
            ProtocolKind::TwoA => ScanAxis::Delay,
            ProtocolKind::TwoB => ScanAxis::Product,
            _ => ScanAxis::PulseCount,
        };
        ScanConfig {
            kind,
            points,
            shots,
            seeds,
            base_seed: 0,
            design: ScanDesign::default(),
            theta_mode: ThetaMode::Fit,
            axis,
        }
    }
}

/// One scan point: columns `N,N_d,M,sigma_dphi,crlb,ratio` plus diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "N_d")]
    pub n_d: u64,
    #[serde(rename = "M")]
    pub m: u64,
    /// Empirical standard deviation of `Δφ̂`.
    pub sigma_dphi: f64,
    /// `√J_ΔφΔφ`.
    pub crlb: f64,
    /// `sigma_dphi / crlb`.
    pub ratio: f64,
    pub xi: f64,
    pub failures: usize,
}

/// Least-squares line `ln σ = c + slope·ln x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub axis: ScanAxis,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub kind: ProtocolKind,
    pub rows: Vec<ScanRow>,
    /// Slope against the configured axis.
    pub fit: SlopeFit,
    /// Slope against the CRLB itself on the same points.
    pub crlb_fit: SlopeFit,
    /// Separate exponents of `N` and `N_d` when both vary.
    pub plane_fit: Option<PlaneFit>,
}

/// Least-squares plane `ln σ = c + a·ln N + b·ln N_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub pulse_slope: f64,
    pub pulse_stderr: f64,
    pub delay_slope: f64,
    pub delay_stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

impl ScanReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fit summary written next to the CSV.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "axis": self.fit.axis,
            "slope": self.fit.slope,
            "stderr": self.fit.stderr,
            "intercept": self.fit.intercept,
            "points": self.fit.points,
            "crlb_slope": self.crlb_fit.slope,
            "plane_fit": self.plane_fit,
        })
    }

    /// `σ_Δφ` predicted by the fit at a (possibly unreachable) axis value.
    pub fn extrapolate(&self, x: f64) -> f64 {
        (self.fit.intercept + self.fit.slope * x.ln()).exp()
    }
}

/// Ordinary least squares with the slope's standard error.
pub fn fit_log_log(axis: ScanAxis, xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("slope fit needs at least two points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if lx.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { axis, slope, stderr, intercept, points: lx.len() })
}

/// Two-regressor least squares in log space. Needs at least four points
/// that vary `N` and `N_d` independently.
pub fn fit_log_log_plane(ns: &[f64], nds: &[f64], ys: &[f64]) -> Result<PlaneFit> {
    let len = ys.len();
    if ns.len() != len || nds.len() != len || len < 4 {
        return Err(Error::InvalidParameter("plane fit needs at least four points".into()));
    }
    let x1: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let x2: Vec<f64> = nds.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = len as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (m1, m2, my) = (mean(&x1), mean(&x2), mean(&y));
    let dot = |a: &[f64], ma: f64, b: &[f64], mb: f64| a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>();
    let (s11, s22, s12) = (dot(&x1, m1, &x1, m1), dot(&x2, m2, &x2, m2), dot(&x1, m1, &x2, m2));
    let (s1y, s2y) = (dot(&x1, m1, &y, my), dot(&x2, m2, &y, my));
    let det = s11 * s22 - s12 * s12;
    if det <= 1e-12 * (s11 * s22).max(1e-300) {
        return Err(Error::InvalidParameter("N and N_d are collinear on the scan grid".into()));
    }
    let a = (s22 * s1y - s12 * s2y) / det;
    let b = (s11 * s2y - s12 * s1y) / det;
    let c = my - a * m1 - b * m2;
    let rss: f64 = (0..len).map(|i| (y[i] - c - a * x1[i] - b * x2[i]).powi(2)).sum();
    let var = if len > 3 { rss / (n - 3.0) } else { 0.0 };
    Ok(PlaneFit {
        pulse_slope: a,
        pulse_stderr: (var * s22 / det).sqrt(),
        delay_slope: b,
        delay_stderr: (var * s11 / det).sqrt(),
        intercept: c,
        points: len,
    })
}

/// Monte Carlo `σ_Δφ` at each point with `ξ` optimized a priori, and the
/// log-log slope against the configured axis.
pub fn sensitivity_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    let opts = EstimateOptions { theta_mode: cfg.theta_mode, ..Default::default() };
    let mut rows = Vec::with_capacity(cfg.points.len());
    for (idx, &(n, n_d)) in cfg.points.iter().enumerate() {
        // zero area until the design picks one
        let base = ProtocolSpec::new(cfg.kind, n, n_d, 0.0)?;
        let k = cfg.design.point(&base);
        let spec = ProtocolSpec { rabi_angle: k.theta, ..base };
        let model = ramsey_model(&spec)?;
        let (xi, _) = optimize_reference_phase(&model, k, cfg.shots, cfg.theta_mode, XI_GRID_POINTS)?;
        let model = model.with_reference_phase(xi);
        let seeds: Vec<u64> =
            (0..cfg.seeds as u64).map(|s| cfg.base_seed.wrapping_add(((idx as u64) << 32) | s)).collect();
        let mc = monte_carlo(&model, k, cfg.shots, &seeds, &opts)?;
        let sigma = mc.var_phase.sqrt();
        let bound = mc.crlb_phase.sqrt();
        rows.push(ScanRow {
            n,
            n_d,
            m: cfg.shots,
            sigma_dphi: sigma,
            crlb: bound,
            ratio: sigma / bound,
            xi,
            failures: mc.failures,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| cfg.axis.value(r.n, r.n_d)).collect();
    let fit = fit_log_log(cfg.axis, &xs, &rows.iter().map(|r| r.sigma_dphi).collect::<Vec<_>>())?;
    let crlb_fit = fit_log_log(cfg.axis, &xs, &rows.iter().map(|r| r.crlb).collect::<Vec<_>>())?;
    let plane_fit = if cfg.kind.is_paired() {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let nds: Vec<f64> = rows.iter().map(|r| r.n_d as f64).collect();
        fit_log_log_plane(&ns, &nds, &rows.iter().map(|r| r.sigma_dphi).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    Ok(ScanReport { kind: cfg.kind, rows, fit, crlb_fit, plane_fit })
}

/// Smallest resolvable offset frequency `f_rep/(N·N_d)` (Hz).
pub fn offset_resolution(rep_rate_hz: f64, n: f64, n_d: f64) -> f64 {
    rep_rate_hz / (n * n_d)
}

/// Staged lock of a comb's phase step with growing pulse numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub comb: CombSpec,
    pub kind: ProtocolKind,
    pub shots: u64,
    /// Pulse-number factor between stages.
    pub growth: u64,
    /// First-stage `N`; by default the largest with `χ|Δφ| ≤ safety·π/4`.
    pub initial_pulses: Option<u64>,
    pub max_pulses: u64,
    pub max_stages: usize,
    pub safety: f64,
    /// Calibrated pulse area.
    pub rabi_angle: f64,
    pub theta_mode: ThetaMode,
    pub seed: u64,
}

impl RefineConfig {
    pub fn new(comb: CombSpec) -> Self {
        RefineConfig {
            comb,
            kind: ProtocolKind::OneB,
            shots: 10_000,
            growth: 4,
            initial_pulses: None,
            max_pulses: 51_200,
            max_stages: 6,
            safety: 0.8,
            rabi_angle: FRAC_PI_2,
            theta_mode: ThetaMode::Known,
            seed: 0,
        }
    }

    /// `N` such that the phase step stays inside the estimator window.
    pub fn safe_initial_pulses(&self) -> u64 {
        let dphi = self.comb.phase_step().abs();
        if dphi == 0.0 {
            return self.max_pulses.max(2);
        }
        let n = (self.safety * PI / (4.0 * dphi)).floor() as u64;
        let n = n.max(2);
        if self.kind.is_paired() || self.kind == ProtocolKind::OneB {
            n - n % 2
        } else {
            n
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineStage {
    pub stage: usize,
    #[serde(rename = "N")]
    pub n: u64,
    /// True phase step before the stage's correction.
    pub residual_before: f64,
    pub estimate: f64,
    /// True phase step after feeding back `−Δφ̂`.
    pub residual_after: f64,
    pub crlb_sigma: f64,
    pub xi: f64,
    pub backed_off: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub stages: Vec<RefineStage>,
    pub final_residual: f64,
    pub final_crlb_sigma: f64,
}

/// Estimates the residual step with `N` pulses, feeds the estimate back
/// perfectly, and multiplies `N` by `growth` until `max_pulses` or
/// `max_stages`. A wrapped estimate backs `N` off once; a second wrap aborts.
pub fn iterative_refine(cfg: &RefineConfig) -> Result<RefineTrace> {
    if cfg.growth < 2 {
        return Err(Error::InvalidParameter("growth factor must be >= 2".into()));
    }
    let even = |n: u64| if matches!(cfg.kind, ProtocolKind::OneB) { (n - n % 2).max(2) } else { n.max(1) };
    let mut n = even(cfg.initial_pulses.unwrap_or_else(|| cfg.safe_initial_pulses()).min(cfg.max_pulses));
    let mut residual = cfg.comb.phase_step();
    let mut stages = Vec::new();
    let opts = EstimateOptions { theta_mode: cfg.theta_mode, ..Default::default() };
    let mut rng_seed = cfg.seed;

    for stage in 0..cfg.max_stages {
        let mut backed_off = false;
        let outcome = loop {
            let spec = ProtocolSpec::new(cfg.kind, n, 0, cfg.rabi_angle)?;
            // the controller believes the step is zero after the last correction
            let prior = Params::new(cfg.rabi_angle, 0.0);
            let model = ramsey_model(&spec)?;
            let (xi, _) = optimize_reference_phase(&model, prior, cfg.shots, cfg.theta_mode, XI_GRID_POINTS)?;
            let model = model.with_reference_phase(xi);
            let truth = Params::new(cfg.rabi_angle, residual);
            let rec = sample_record(&model, truth, cfg.shots, rng_seed)?;
            rng_seed = rng_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            match ml_estimate(&rec, &model, prior, &opts) {
                Ok(r) => break (r, xi),
                Err(Error::Ambiguity(msg)) if !backed_off && n > 2 => {
                    log::warn!("stage {stage}: wrap at N = {n} ({msg}); backing off");
                    n = even(n / cfg.growth);
                    backed_off = true;
                }
                Err(Error::Ambiguity(msg)) => {
                    return Err(Error::Ambiguity(format!("refinement aborted at stage {stage}, N = {n}: {msg}")))
                }
                Err(e) => return Err(e),
            }
        };
        let (est, xi) = outcome;
        let before = residual;
        residual -= est.phase_step;
        stages.push(RefineStage {
            stage,
            n,
            residual_before: before,
            estimate: est.phase_step,
            residual_after: residual,
            crlb_sigma: est.crlb.phase_sigma(),
            xi,
            backed_off,
        });
        if n >= cfg.max_pulses {
            break;
        }
        n = even((n * cfg.growth).min(cfg.max_pulses));
    }
    let last = stages.last().expect("at least one stage");
    Ok(RefineTrace { final_residual: last.residual_after, final_crlb_sigma: last.crlb_sigma, stages: stages.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fisher_bounds() {
        let b = crlb(&FisherMatrix::identity());
        assert_eq!(b.variances, [1.0, 1.0]);
        assert!(!b.singular);
    }

    #[test]
    fn singular_fisher_uses_pseudo_inverse() {
        let f = FisherMatrix::new([[1.0, 2.0], [2.0, 4.0]]).unwrap();
        let b = crlb(&f);
        assert!(b.singular);
        // pinv of v vᵀ·5 with v = (1,2)/√5 is v vᵀ/5
        assert!((b.variances[0] - 1.0 / 25.0).abs() < 1e-12);
        assert!((b.variances[1] - 4.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(FisherMatrix::new([[1.0, 0.5], [0.2, 1.0]]).is_err());
        assert!(FisherMatrix::new([[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn log_log_fit_recovers_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        let f = fit_log_log(ScanAxis::PulseCount, &xs, &ys).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn plane_fit_separates_exponents() {
        let pts = [(10.0, 2.0), (100.0, 2.0), (10.0, 20.0), (100.0, 50.0), (1000.0, 5.0)];
        let ns: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let nds: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let ys: Vec<f64> = pts.iter().map(|p: &(f64, f64)| 0.5 * p.0.powf(-1.0) * p.1.powf(-0.5)).collect();
        let f = fit_log_log_plane(&ns, &nds, &ys).unwrap();
        assert!((f.pulse_slope + 1.0).abs() < 1e-12 && (f.delay_slope + 0.5).abs() < 1e-12);
        assert!(fit_log_log_plane(&ns, &ns, &ys).is_err());
    }

    #[test]
    fn golden_section_finds_interior_and_edge() {
        let (x, _) = golden_section_max(|x| -(x - 0.3f64).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        let (x, _) = golden_section_max(|x| x, 0.0, 1.0, 1e-12);
        assert_eq!(x, 1.0);
        let (x, _) = golden_section_max(|x| if x < 0.5 { x } else { f64::NEG_INFINITY }, 0.0, 1.0, 1e-12);
        assert!(x < 0.5 && x > 0.49, "{x}");
    }

    #[test]
    fn resolution_arithmetic() {
        assert!((offset_resolution(100e6, 5e5, 5e5) - 4e-4).abs() < 1e-15);
    }
}
