//! Python bindings: combs, protocols, sampling, estimation and scans.

use std::f64::consts::FRAC_PI_2;

use mpqi::comb::{CombSpec, PulseTemplate, DEFAULT_PAIR_GAP};
use mpqi::dynamics::{integrate_pulse, rwa_unitary, unitary_fidelity, Envelope, PulseSpec, DEFAULT_STEPS_PER_CYCLE};
use mpqi::estimation::{
    self, crlb, expected_record, fisher_matrix, iterative_refine, ml_estimate, sample_record, sensitivity_scan,
    EstimateOptions, MeasurementRecord, Params, RefineConfig, ScanConfig, ThetaMode, XI_GRID_POINTS,
};
use mpqi::linalg::{Unitary, C64};
use mpqi::noise::{doppler_phase_error, ThermalSpec};
use mpqi::protocols::{
    compose_train, phase_reference_sequence, protocol_train, ramsey_model, Propagation, ProtocolKind, ProtocolSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(mpqi_py, MpqiError, PyException, "Numerical failure inside mpqi.");
create_exception!(mpqi_py, AmbiguityError, MpqiError, "Accumulated phase may have wrapped.");

fn to_py(e: mpqi::Error) -> PyErr {
    use mpqi::Error as E;
    match e {
        E::InvalidParameter(_)
        | E::OddLength(_)
        | E::Overlap { .. }
        | E::ReplicaBudget { .. }
        | E::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        E::Ambiguity(_) => AmbiguityError::new_err(e.to_string()),
        _ => MpqiError::new_err(e.to_string()),
    }
}

fn rows(u: &Unitary) -> Vec<Vec<C64>> {
    let m = u.matrix();
    (0..m.dim()).map(|r| (0..m.dim()).map(|c| m.get(r, c)).collect()).collect()
}

fn theta_mode(fit_theta: bool) -> ThetaMode {
    if fit_theta {
        ThetaMode::Fit
    } else {
        ThetaMode::Known
    }
}

fn parse_envelope(name: &str) -> PyResult<Envelope> {
    match name {
        "gaussian" => Ok(Envelope::Gaussian),
        "cos2" => Ok(Envelope::Cos2),
        "rect" => Ok(Envelope::Rect),
        other => Err(PyValueError::new_err(format!("unknown envelope '{other}' (gaussian, cos2, rect)"))),
    }
}

/// Frequency comb: repetition rate, offset frequency and pulse shape.
#[pyclass(name = "Comb", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyComb(CombSpec);

#[pymethods]
impl PyComb {
    #[new]
    #[pyo3(signature = (rep_rate_hz, offset_hz, pulse_duration_s = 1e-12, wavelength_m = 355e-9))]
    fn new(rep_rate_hz: f64, offset_hz: f64, pulse_duration_s: f64, wavelength_m: f64) -> PyResult<Self> {
        let template = PulseTemplate::optical(Envelope::Gaussian, FRAC_PI_2, pulse_duration_s, wavelength_m);
        CombSpec::new(rep_rate_hz, offset_hz, template).map(PyComb).map_err(to_py)
    }

    /// Free-running fiber comb: 100 MHz, 200 kHz offset, 1 ps pulses.
    #[staticmethod]
    fn fiber() -> Self {
        PyComb(CombSpec::fiber())
    }

    /// Stabilized comb: 100 MHz, zero offset, 10 ps pulses.
    #[staticmethod]
    fn typical() -> Self {
        PyComb(CombSpec::typical())
    }

    #[getter]
    fn rep_rate_hz(&self) -> f64 {
        self.0.rep_rate_hz
    }

    #[getter]
    fn offset_hz(&self) -> f64 {
        self.0.offset_freq_hz
    }

    /// CEO phase advance between consecutive pulses (rad).
    fn phase_step(&self) -> f64 {
        self.0.phase_step()
    }

    /// Copy of this comb whose phase step is `phase_step`.
    fn with_phase_step(&self, phase_step: f64) -> Self {
        PyComb(CombSpec { offset_freq_hz: self.0.offset_for_phase_step(phase_step), ..self.0 })
    }

    fn __repr__(&self) -> String {
        format!("Comb(rep_rate_hz={}, offset_hz={})", self.0.rep_rate_hz, self.0.offset_freq_hz)
    }
}

/// Pulse sequence: kind "1A", "1B", "2A", "2B" or "phase_ref".
#[pyclass(name = "Protocol", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyProtocol(ProtocolSpec);

#[pymethods]
impl PyProtocol {
    #[new]
    #[pyo3(signature = (kind, pulse_count, delay = 0, rabi_angle = FRAC_PI_2, reference_phase = 0.0))]
    fn new(kind: &str, pulse_count: u64, delay: u64, rabi_angle: f64, reference_phase: f64) -> PyResult<Self> {
        let kind: ProtocolKind = kind.parse().map_err(to_py)?;
        let spec = ProtocolSpec::new(kind, pulse_count, delay, rabi_angle)
            .map_err(to_py)?
            .with_reference_phase(reference_phase);
        spec.validate().map_err(to_py)?;
        Ok(PyProtocol(spec))
    }

    #[getter]
    fn kind(&self) -> String {
        self.0.kind.to_string()
    }

    #[getter]
    fn pulse_count(&self) -> u64 {
        self.0.pulse_count
    }

    #[getter]
    fn delay(&self) -> u64 {
        self.0.delay
    }

    #[getter]
    fn rabi_angle(&self) -> f64 {
        self.0.rabi_angle
    }

    #[getter]
    fn reference_phase(&self) -> f64 {
        self.0.reference_phase
    }

    /// Factor between the phase step and the accumulated phase.
    fn phase_gain(&self) -> f64 {
        self.0.phase_gain()
    }

    fn with_reference_phase(&self, xi: f64) -> PyResult<Self> {
        let spec = self.0.with_reference_phase(xi);
        spec.validate().map_err(to_py)?;
        Ok(PyProtocol(spec))
    }

    /// Closed-form sequence unitary as nested lists of complex numbers.
    fn unitary(&self, phase_step: f64) -> PyResult<Vec<Vec<C64>>> {
        let model = ramsey_model(&self.0).map_err(to_py)?;
        Ok(rows(&model.total_unitary(self.0.rabi_angle, phase_step)))
    }

    /// Sequence unitary composed pulse by pulse on `comb`.
    #[pyo3(signature = (comb, pair_gap_s = DEFAULT_PAIR_GAP))]
    fn compose(&self, comb: &PyComb, pair_gap_s: f64) -> PyResult<Vec<Vec<C64>>> {
        let train = protocol_train(&comb.0, &self.0, pair_gap_s).map_err(to_py)?;
        let u = match self.0.kind {
            ProtocolKind::PhaseRef => phase_reference_sequence(&train),
            _ => compose_train(&train, Propagation::Rwa),
        }
        .map_err(to_py)?;
        Ok(rows(&u))
    }

    /// Probability of outcome 1 in the Ramsey and direct arms.
    fn probabilities(&self, theta: f64, phase_step: f64) -> PyResult<(f64, f64)> {
        let o = ramsey_model(&self.0).map_err(to_py)?.evaluate(theta, phase_step);
        Ok((o.p1[1], o.p2[1]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Protocol(kind='{}', pulse_count={}, delay={}, rabi_angle={}, reference_phase={})",
            self.0.kind, self.0.pulse_count, self.0.delay, self.0.rabi_angle, self.0.reference_phase
        )
    }
}

/// Outcome counts of both measurement arms.
#[pyclass(name = "Record", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRecord(MeasurementRecord);

#[pymethods]
impl PyRecord {
    #[new]
    #[pyo3(signature = (shots, ramsey = None, direct = None))]
    fn new(shots: u64, ramsey: Option<[u64; 2]>, direct: Option<[u64; 2]>) -> PyResult<Self> {
        MeasurementRecord::new(shots, ramsey, direct).map(PyRecord).map_err(to_py)
    }

    #[getter]
    fn shots(&self) -> u64 {
        self.0.shots
    }

    #[getter]
    fn ramsey(&self) -> Option<[u64; 2]> {
        self.0.counts(mpqi::protocols::Arm::Ramsey)
    }

    #[getter]
    fn direct(&self) -> Option<[u64; 2]> {
        self.0.counts(mpqi::protocols::Arm::Direct)
    }

    fn __repr__(&self) -> String {
        format!("Record(shots={}, ramsey={:?}, direct={:?})", self.0.shots, self.ramsey(), self.direct())
    }
}

/// Maximum-likelihood estimate with its Cramér-Rao bound.
#[pyclass(name = "Estimate", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEstimate {
    theta: f64,
    phase_step: f64,
    theta_sigma: f64,
    phase_sigma: f64,
    log_likelihood: f64,
    converged: bool,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(theta={}, phase_step={}, phase_sigma={}, converged={})",
            self.theta, self.phase_step, self.phase_sigma, self.converged
        )
    }
}

/// Binomial counts drawn at `(theta, phase_step)`.
#[pyfunction]
fn sample(protocol: &PyProtocol, theta: f64, phase_step: f64, shots: u64, seed: u64) -> PyResult<PyRecord> {
    let model = ramsey_model(&protocol.0).map_err(to_py)?;
    sample_record(&model, Params::new(theta, phase_step), shots, seed).map(PyRecord).map_err(to_py)
}

/// Noise-free counts (rounded expectations).
#[pyfunction]
fn expected(protocol: &PyProtocol, theta: f64, phase_step: f64, shots: u64) -> PyResult<PyRecord> {
    let model = ramsey_model(&protocol.0).map_err(to_py)?;
    expected_record(&model, Params::new(theta, phase_step), shots).map(PyRecord).map_err(to_py)
}

/// Estimates `(theta, phase_step)` from `record`, searching around the guess.
#[pyfunction]
#[pyo3(signature = (protocol, record, theta_guess, phase_step_guess = 0.0, fit_theta = true, phase_window = None))]
fn estimate(
    protocol: &PyProtocol,
    record: &PyRecord,
    theta_guess: f64,
    phase_step_guess: f64,
    fit_theta: bool,
    phase_window: Option<f64>,
) -> PyResult<PyEstimate> {
    let model = ramsey_model(&protocol.0).map_err(to_py)?;
    let opts = EstimateOptions { theta_mode: theta_mode(fit_theta), phase_window, ..Default::default() };
    let r = ml_estimate(&record.0, &model, Params::new(theta_guess, phase_step_guess), &opts).map_err(to_py)?;
    Ok(PyEstimate {
        theta: r.theta,
        phase_step: r.phase_step,
        theta_sigma: r.crlb.theta_sigma(),
        phase_sigma: r.crlb.phase_sigma(),
        log_likelihood: r.log_likelihood,
        converged: r.converged,
    })
}

/// Cramér-Rao standard deviations `(theta, phase_step)` for `shots` per arm.
#[pyfunction]
#[pyo3(signature = (protocol, theta, phase_step, shots, fit_theta = true))]
fn cramer_rao(protocol: &PyProtocol, theta: f64, phase_step: f64, shots: u64, fit_theta: bool) -> PyResult<(f64, f64)> {
    let model = ramsey_model(&protocol.0).map_err(to_py)?;
    let info = fisher_matrix(&model, Params::new(theta, phase_step), shots).map_err(to_py)?;
    if fit_theta {
        let b = crlb(&info);
        Ok((b.theta_sigma(), b.phase_sigma()))
    } else {
        Ok((0.0, (1.0 / info.get(estimation::PHASE, estimation::PHASE)).sqrt()))
    }
}

/// Reference phase maximizing the phase-step information at the given point.
#[pyfunction]
#[pyo3(signature = (protocol, theta, phase_step, shots, fit_theta = true))]
fn best_reference_phase(
    protocol: &PyProtocol,
    theta: f64,
    phase_step: f64,
    shots: u64,
    fit_theta: bool,
) -> PyResult<f64> {
    let model = ramsey_model(&protocol.0).map_err(to_py)?;
    estimation::optimize_reference_phase(
        &model,
        Params::new(theta, phase_step),
        shots,
        theta_mode(fit_theta),
        XI_GRID_POINTS,
    )
    .map(|(xi, _)| xi)
    .map_err(to_py)
}

/// Result of a sensitivity scan.
#[pyclass(name = "Scan", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScan {
    /// `(N, N_d, sigma_dphi, crlb, ratio)` per point.
    rows: Vec<(u64, u64, f64, f64, f64)>,
    slope: f64,
    stderr: f64,
    crlb_slope: f64,
}

#[pymethods]
impl PyScan {
    fn __repr__(&self) -> String {
        format!("Scan(points={}, slope={:.4}, stderr={:.4})", self.rows.len(), self.slope, self.stderr)
    }
}

/// Monte Carlo `sigma_dphi` over `(N, N_d)` points with a log-log slope fit.
#[pyfunction]
#[pyo3(signature = (kind, points, shots, seeds, base_seed = 0, fit_theta = true))]
fn scan(
    kind: &str,
    points: Vec<(u64, u64)>,
    shots: u64,
    seeds: usize,
    base_seed: u64,
    fit_theta: bool,
) -> PyResult<PyScan> {
    let kind: ProtocolKind = kind.parse().map_err(to_py)?;
    let mut cfg = ScanConfig::new(kind, points, shots, seeds);
    cfg.base_seed = base_seed;
    cfg.theta_mode = theta_mode(fit_theta);
    let r = sensitivity_scan(&cfg).map_err(to_py)?;
    Ok(PyScan {
        rows: r.rows.iter().map(|x| (x.n, x.n_d, x.sigma_dphi, x.crlb, x.ratio)).collect(),
        slope: r.fit.slope,
        stderr: r.fit.stderr,
        crlb_slope: r.crlb_fit.slope,
    })
}

/// Staged lock of `comb`; returns `(N, residual_after)` per stage.
#[pyfunction]
#[pyo3(signature = (comb, seed = 0, shots = 10_000))]
fn refine(comb: &PyComb, seed: u64, shots: u64) -> PyResult<Vec<(u64, f64)>> {
    let mut cfg = RefineConfig::new(comb.0);
    cfg.seed = seed;
    cfg.shots = shots;
    let trace = iterative_refine(&cfg).map_err(to_py)?;
    Ok(trace.stages.iter().map(|s| (s.n, s.residual_after)).collect())
}

/// `1 − F(full, rotating-wave)` for a resonant pulse of `cycles` carrier periods.
#[pyfunction]
#[pyo3(signature = (rabi_angle, cycles, envelope = "gaussian", ceo_phase = 0.0))]
fn rwa_infidelity(rabi_angle: f64, cycles: f64, envelope: &str, ceo_phase: f64) -> PyResult<f64> {
    let p = PulseSpec::resonant(parse_envelope(envelope)?, rabi_angle, cycles, 1.0, ceo_phase).map_err(to_py)?;
    let full = integrate_pulse(&p, DEFAULT_STEPS_PER_CYCLE).map_err(to_py)?;
    let rwa = rwa_unitary(&p).map_err(to_py)?;
    unitary_fidelity(&full, &rwa).map(|f| 1.0 - f).map_err(to_py)
}

/// Largest accumulated phase over pairings of the given CEO phases.
#[pyfunction]
fn best_pairing_phase(phases: Vec<f64>) -> PyResult<f64> {
    mpqi::protocols::optimal_permutation_phase(&phases).map(|p| p.max_accumulated).map_err(to_py)
}

/// Offset-frequency resolution `f_rep/(N N_d)` (Hz).
#[pyfunction]
fn offset_resolution(rep_rate_hz: f64, pulse_count: f64, delay: f64) -> f64 {
    estimation::offset_resolution(rep_rate_hz, pulse_count, delay)
}

/// Pulses affordable before spontaneous emission costs `epsilon` visibility.
#[pyfunction]
fn visibility_budget(decay_rate: f64, excited_time: f64, epsilon: f64) -> PyResult<u64> {
    mpqi::raman::visibility_budget(decay_rate, excited_time, epsilon).map_err(to_py)
}

/// Doppler phase error of a cooled 9Be+ ion over `gap_s`.
#[pyfunction]
#[pyo3(signature = (gap_s, copropagating = false))]
fn doppler_phase(gap_s: f64, copropagating: bool) -> PyResult<f64> {
    let spec = ThermalSpec { copropagating_raman: copropagating, ..ThermalSpec::beryllium() };
    doppler_phase_error(&spec, gap_s).map_err(to_py)
}

#[pymodule]
pub fn mpqi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MpqiError", m.py().get_type::<MpqiError>())?;
    m.add("AmbiguityError", m.py().get_type::<AmbiguityError>())?;
    m.add_class::<PyComb>()?;
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyRecord>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyScan>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(expected, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(cramer_rao, m)?)?;
    m.add_function(wrap_pyfunction!(best_reference_phase, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(rwa_infidelity, m)?)?;
    m.add_function(wrap_pyfunction!(best_pairing_phase, m)?)?;
    m.add_function(wrap_pyfunction!(offset_resolution, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_budget, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_phase, m)?)?;
    Ok(())
}
