//! Scenario files: one TOML document, one task section, SI-suffixed keys.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::PathBuf;

use mpqi::comb::{CombSpec, PhaseConvention, PulseTemplate, DEFAULT_PAIR_GAP};
use mpqi::dynamics::{Envelope, DEFAULT_STEPS_PER_CYCLE};
use mpqi::estimation::{ScanAxis, ScanDesign, ThetaMode};
use mpqi::protocols::ProtocolKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Defaults to the file stem.
    pub name: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub comb: Option<CombConfig>,

    pub pulse: Option<PulseTask>,
    pub protocol: Option<ProtocolTask>,
    pub closed_forms: Option<ClosedFormTask>,
    pub permutation: Option<PermutationTask>,
    pub resolution: Option<ResolutionTask>,
    pub raman: Option<RamanTask>,
    pub visibility: Option<VisibilityTask>,
    pub noise: Option<NoiseTask>,
    pub estimate: Option<EstimateTask>,
    pub scan: Option<ScanTask>,
    pub refine: Option<RefineTask>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CombPreset {
    Fiber,
    Typical,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CombConfig {
    pub preset: Option<CombPreset>,
    pub rep_rate_hz: Option<f64>,
    pub offset_hz: Option<f64>,
    pub pulse_duration_s: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub envelope: Option<Envelope>,
    pub convention: Option<PhaseConvention>,
}

impl CombConfig {
    pub fn build(&self) -> Result<CombSpec, CliError> {
        let mut c = match self.preset.unwrap_or(CombPreset::Typical) {
            CombPreset::Fiber => CombSpec::fiber(),
            CombPreset::Typical => CombSpec::typical(),
        };
        if let Some(f) = self.rep_rate_hz {
            c.rep_rate_hz = f;
        }
        if let Some(f) = self.offset_hz {
            c.offset_freq_hz = f;
        }
        if let Some(c0) = self.convention {
            c.convention = c0;
        }
        let envelope = self.envelope.unwrap_or(c.template.envelope);
        let duration = self.pulse_duration_s.unwrap_or(c.template.duration);
        c.template = match self.wavelength_m {
            Some(w) => PulseTemplate::optical(envelope, c.template.rabi_angle, duration, w),
            None => PulseTemplate { envelope, duration, ..c.template },
        };
        c.validate()?;
        Ok(c)
    }
}

fn default_envelope() -> Envelope {
    Envelope::Gaussian
}
fn default_cos2() -> Envelope {
    Envelope::Cos2
}
fn default_steps() -> usize {
    DEFAULT_STEPS_PER_CYCLE
}
fn default_quarter() -> f64 {
    FRAC_PI_4
}
fn default_half() -> f64 {
    FRAC_PI_2
}
fn default_one() -> f64 {
    1.0
}
fn default_gap() -> f64 {
    DEFAULT_PAIR_GAP
}
fn default_true() -> bool {
    true
}

/// Full versus rotating-wave propagation of single pulses over durations.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PulseTask {
    #[serde(default = "default_quarter")]
    pub rabi_angle_rad: f64,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
    pub cycles: Vec<f64>,
    #[serde(default = "default_one")]
    pub carrier_freq_rad_per_s: f64,
    #[serde(default)]
    pub ceo_phase_rad: f64,
    #[serde(default = "default_steps")]
    pub steps_per_cycle: usize,
}

/// One protocol on the configured comb.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolTask {
    pub kind: ProtocolKind,
    pub pulse_count: u64,
    #[serde(default)]
    pub delay: u64,
    #[serde(default = "default_half")]
    pub rabi_angle_rad: f64,
    #[serde(default)]
    pub reference_phase_rad: f64,
    /// Overrides the comb's phase step.
    pub phase_step_rad: Option<f64>,
    #[serde(default = "default_gap")]
    pub pair_gap_s: f64,
    /// Also build the pulse train and compose it pulse by pulse.
    #[serde(default = "default_true")]
    pub compose: bool,
}

/// Randomized agreement of composed trains with closed forms.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormTask {
    pub cases: usize,
    pub max_pulses: u64,
    pub max_delay: u64,
    pub max_phase_step_rad: f64,
    /// Fraction of cases run with weak pulses.
    pub weak_fraction: f64,
    pub weak_rabi_angle_rad: f64,
    pub weak_max_pulses: u64,
}

/// Analytic best pairing against exhaustive search.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationTask {
    pub sizes: Vec<usize>,
    pub random_sets: usize,
    /// Spacing of the arithmetic-progression set (rad).
    pub progression_step_rad: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionCase {
    pub label: String,
    pub pulse_count: u64,
    pub delay: u64,
    /// Compose the 2B train at a quarter-resolution offset (small cases only).
    #[serde(default)]
    pub simulate: bool,
}

/// Offset-frequency resolution `f_rep/(N N_d)` of the delayed-pair protocol.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionTask {
    pub rep_rate_hz: f64,
    pub cases: Vec<ResolutionCase>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaPulseConfig {
    /// Peak drive as a fraction of the excited-state frequency.
    pub rabi_fraction: f64,
    /// Laser frequency as a fraction of the excited-state frequency.
    pub laser_fraction: f64,
    pub cycles: f64,
    #[serde(default = "default_cos2")]
    pub envelope: Envelope,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMapConfig {
    /// Peak drive as a fraction of the laser frequency.
    pub rabi_fraction_of_laser: f64,
    pub laser_fraction: f64,
    pub cycles: f64,
    pub points: usize,
    #[serde(default = "default_cos2")]
    pub envelope: Envelope,
}

/// Three-level Λ pulses in units of the excited-state frequency.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RamanTask {
    #[serde(default = "default_one")]
    pub excited_freq_rad_per_s: f64,
    #[serde(default = "default_steps")]
    pub steps_per_cycle: usize,
    #[serde(default)]
    pub pulses: Vec<LambdaPulseConfig>,
    pub phase_map: Option<PhaseMapConfig>,
}

/// Pulses affordable before spontaneous emission spoils the visibility.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityTask {
    pub lifetimes_s: Vec<f64>,
    pub excited_time_s: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    pub sigma_hz: f64,
    pub correlation_time_s: f64,
    #[serde(default = "default_gap")]
    pub pair_gap_s: f64,
    pub trials: u64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    Beryllium9,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub species: Species,
    pub linewidth_hz: Option<f64>,
    pub wavelength_m: Option<f64>,
    #[serde(default = "default_gap")]
    pub gap_s: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTask {
    pub dephasing: Option<DephasingConfig>,
    pub thermal: Option<ThermalConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatePoint {
    pub kind: ProtocolKind,
    pub pulse_count: u64,
    #[serde(default)]
    pub delay: u64,
    #[serde(default)]
    pub design: Option<ScanDesign>,
}

/// Maximum-likelihood estimates against the Cramér-Rao bound.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateTask {
    pub shots: u64,
    pub seeds: usize,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    pub points: Vec<EstimatePoint>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSeries {
    pub kind: ProtocolKind,
    pub points: Vec<(u64, u64)>,
    pub axis: Option<ScanAxis>,
    /// `(N, N_d)` points to extrapolate the fit to.
    #[serde(default)]
    pub extrapolate: Vec<(f64, f64)>,
}

/// Sensitivity against pulse number with log-log fits.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScanTask {
    pub shots: u64,
    pub seeds: usize,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    pub design: Option<ScanDesign>,
    pub series: Vec<ScanSeries>,
}

/// Staged lock of the comb's phase step.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RefineTask {
    #[serde(default = "default_runs")]
    pub runs: u64,
    pub kind: Option<ProtocolKind>,
    pub shots: Option<u64>,
    pub growth: Option<u64>,
    pub initial_pulses: Option<u64>,
    pub max_pulses: Option<u64>,
    pub max_stages: Option<usize>,
    pub safety: Option<f64>,
    pub theta_mode: Option<ThetaMode>,
}

fn default_runs() -> u64 {
    1
}

/// The single task a scenario runs.
#[derive(Clone, Debug)]
pub enum Task {
    Pulse(PulseTask),
    Protocol(ProtocolTask),
    ClosedForms(ClosedFormTask),
    Permutation(PermutationTask),
    Resolution(ResolutionTask),
    Raman(RamanTask),
    Visibility(VisibilityTask),
    Noise(NoiseTask),
    Estimate(EstimateTask),
    Scan(ScanTask),
    Refine(RefineTask),
}

impl Task {
    /// Subcommand that runs this task.
    pub fn command(&self) -> &'static str {
        match self {
            Task::Pulse(_) => "pulse",
            Task::Protocol(_) | Task::ClosedForms(_) | Task::Permutation(_) | Task::Resolution(_) => "protocol",
            Task::Raman(_) | Task::Visibility(_) => "raman",
            Task::Noise(_) => "noise",
            Task::Estimate(_) => "estimate",
            Task::Scan(_) => "scan",
            Task::Refine(_) => "refine",
        }
    }

    pub fn section(&self) -> &'static str {
        match self {
            Task::Pulse(_) => "pulse",
            Task::Protocol(_) => "protocol",
            Task::ClosedForms(_) => "closed_forms",
            Task::Permutation(_) => "permutation",
            Task::Resolution(_) => "resolution",
            Task::Raman(_) => "raman",
            Task::Visibility(_) => "visibility",
            Task::Noise(_) => "noise",
            Task::Estimate(_) => "estimate",
            Task::Scan(_) => "scan",
            Task::Refine(_) => "refine",
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Err(CliError::Schema("config is empty".into()));
        }
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.task()?;
        Ok(cfg)
    }

    pub fn task(&self) -> Result<Task, CliError> {
        let mut found: Vec<Task> = Vec::new();
        macro_rules! take {
            ($field:ident, $variant:ident) => {
                if let Some(t) = &self.$field {
                    found.push(Task::$variant(t.clone()));
                }
            };
        }
        take!(pulse, Pulse);
        take!(protocol, Protocol);
        take!(closed_forms, ClosedForms);
        take!(permutation, Permutation);
        take!(resolution, Resolution);
        take!(raman, Raman);
        take!(visibility, Visibility);
        take!(noise, Noise);
        take!(estimate, Estimate);
        take!(scan, Scan);
        take!(refine, Refine);
        match found.len() {
            1 => Ok(found.remove(0)),
            0 => Err(CliError::Schema("config defines no task section".into())),
            _ => Err(CliError::Schema(format!(
                "config defines {} task sections ({}); exactly one is allowed",
                found.len(),
                found.iter().map(Task::section).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn comb(&self) -> Result<CombSpec, CliError> {
        self.comb.clone().unwrap_or_default().build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_unknown_keys_rejected() {
        assert!(matches!(ScenarioConfig::parse(""), Err(CliError::Schema(_))));
        let text = "schema_version = 1\nbogus = 3\n[visibility]\nlifetimes_s = [8e-9]\nexcited_time_s = 1e-10\nepsilon = 0.1\n";
        assert!(matches!(ScenarioConfig::parse(text), Err(CliError::Schema(_))));
    }

    #[test]
    fn exactly_one_task() {
        let none = "schema_version = 1\n";
        assert!(ScenarioConfig::parse(none).is_err());
        let two = "schema_version = 1\n[visibility]\nlifetimes_s = [8e-9]\nexcited_time_s = 1e-10\nepsilon = 0.1\n\
                   [pulse]\ncycles = [5.0]\n";
        assert!(ScenarioConfig::parse(two).is_err());
        let one = "schema_version = 1\n[pulse]\ncycles = [5.0]\n";
        assert_eq!(ScenarioConfig::parse(one).unwrap().task().unwrap().command(), "pulse");
    }

    #[test]
    fn future_schema_rejected() {
        let text = "schema_version = 2\n[pulse]\ncycles = [5.0]\n";
        assert!(matches!(ScenarioConfig::parse(text), Err(CliError::Schema(_))));
    }

    #[test]
    fn comb_overrides_apply() {
        let c =
            CombConfig { preset: Some(CombPreset::Fiber), offset_hz: Some(1e3), ..Default::default() }.build().unwrap();
        assert_eq!(c.offset_freq_hz, 1e3);
        assert_eq!(c.rep_rate_hz, 100e6);
        let bad = CombConfig { rep_rate_hz: Some(-1.0), ..Default::default() };
        assert!(bad.build().is_err());
    }
}
