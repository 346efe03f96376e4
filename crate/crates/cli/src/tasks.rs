//! One function per task section; each returns tables and summary numbers.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use mpqi::comb::CombSpec;
use mpqi::dynamics::{integrate_pulse, rwa_unitary, unitary_fidelity, PulseSpec};
use mpqi::estimation::{
    iterative_refine, monte_carlo, offset_resolution, optimize_reference_phase, sensitivity_scan, EstimateOptions,
    RefineConfig, ScanAxis, ScanConfig, XI_GRID_POINTS,
};
use mpqi::linalg::sigma_z_angle;
use mpqi::noise::{dephase_train, doppler_phase_error, DephasingSpec, ThermalSpec};
use mpqi::protocols::{
    closed_form_1a, closed_form_1b, closed_form_2b, compose_train, exhaustive_permutation_phase, first_order_1a,
    optimal_permutation_phase, phase_reference_sequence, protocol_train, ramsey_model, Propagation, ProtocolKind,
    ProtocolResult, ProtocolSpec,
};
use mpqi::raman::{integrate_lambda, phase_map, uniform_phase_grid, visibility_budget, LambdaSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::*;
use crate::error::CliError;
use crate::report::{Report, Table};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cfg: &ScenarioConfig, task: &Task, seed: u64, name: &str) -> Result<Report> {
    match task {
        Task::Pulse(t) => pulse(t, name),
        Task::Protocol(t) => protocol(t, &cfg.comb()?, name),
        Task::ClosedForms(t) => closed_forms(t, &cfg.comb()?, seed, name),
        Task::Permutation(t) => permutation(t, seed, name),
        Task::Resolution(t) => resolution(t, &cfg.comb()?, name),
        Task::Raman(t) => raman(t, name),
        Task::Visibility(t) => visibility(t, name),
        Task::Noise(t) => noise(t, &cfg.comb()?, seed, name),
        Task::Estimate(t) => estimate(t, seed, name),
        Task::Scan(t) => scan(t, seed, name),
        Task::Refine(t) => refine(t, &cfg.comb()?, seed, name),
    }
}

fn pulse(t: &PulseTask, name: &str) -> Result<Report> {
    let mut table = Table::new(name, &["cycles", "fidelity", "infidelity"]);
    let mut rep = Report::default();
    let mut infidelities = Vec::new();
    for &cycles in &t.cycles {
        let p = PulseSpec::resonant(t.envelope, t.rabi_angle_rad, cycles, t.carrier_freq_rad_per_s, t.ceo_phase_rad)?;
        let full = integrate_pulse(&p, t.steps_per_cycle)?;
        let f = unitary_fidelity(&full, &rwa_unitary(&p)?)?;
        table.push(vec![json!(cycles), json!(f), json!(1.0 - f)]);
        rep.line(format!("{cycles} cycles: infidelity {:.3e}", 1.0 - f));
        infidelities.push(1.0 - f);
    }
    let monotone = infidelities.windows(2).all(|w| w[1] <= w[0]);
    rep.line(format!("fidelity non-decreasing in duration: {monotone}"));
    rep.note("monotone", monotone);
    rep.note("infidelity", &infidelities);
    rep.tables.push(table);
    Ok(rep)
}

fn protocol(t: &ProtocolTask, comb: &CombSpec, name: &str) -> Result<Report> {
    let spec = ProtocolSpec::new(t.kind, t.pulse_count, t.delay, t.rabi_angle_rad)?
        .with_reference_phase(t.reference_phase_rad);
    let step = match t.phase_step_rad {
        Some(s) => s,
        None => comb.phase_step(),
    };
    let result = ProtocolResult::evaluate(&spec, step)?;
    let mut cols = vec!["kind", "N", "N_d", "xi", "phase_step", "accumulated_phase", "composed_fidelity"];
    cols.extend(["u00_re", "u00_im", "u01_re", "u01_im", "u10_re", "u10_im", "u11_re", "u11_im"]);
    let mut table = Table::new(name, &cols);
    let composed = if t.compose {
        let c = CombSpec { offset_freq_hz: comb.offset_for_phase_step(step), ..*comb };
        let train = protocol_train(&c, &ProtocolSpec { rabi_angle: t.rabi_angle_rad, ..spec }, t.pair_gap_s)?;
        let u = match t.kind {
            ProtocolKind::PhaseRef => phase_reference_sequence(&train)?,
            _ => compose_train(&train, Propagation::Rwa)?,
        };
        let model = ramsey_model(&spec)?.total_unitary(t.rabi_angle_rad, step);
        Some(unitary_fidelity(&u, &model)?)
    } else {
        None
    };
    let mut row = vec![
        json!(result.kind),
        json!(result.n),
        json!(result.n_d),
        json!(result.xi),
        json!(result.phase_step),
        json!(result.accumulated_phase),
        composed.map_or(Value::Null, |f| json!(f)),
    ];
    for (re, im) in result.unitary.re.iter().zip(&result.unitary.im) {
        row.push(json!(re));
        row.push(json!(im));
    }
    table.push(row);
    let mut rep = Report::default();
    rep.line(format!(
        "{} N={} N_d={}: phase gain {} ; accumulated {:.6e} rad",
        t.kind,
        t.pulse_count,
        t.delay,
        spec.phase_gain(),
        result.accumulated_phase
    ));
    if let Some(f) = composed {
        rep.line(format!("pulse-by-pulse composition vs model fidelity 1-{:.1e}", 1.0 - f));
    }
    rep.note("result", &result);
    rep.tables.push(table);
    Ok(rep)
}

fn closed_forms(t: &ClosedFormTask, comb: &CombSpec, seed: u64, name: &str) -> Result<Report> {
    if t.max_pulses < 2 || t.weak_max_pulses < 1 || t.max_delay < 1 {
        return Err(CliError::Schema(
            "closed_forms needs max_pulses >= 2, weak_max_pulses >= 1, max_delay >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::new(name, &["case", "kind", "N", "N_d", "phase_step", "fidelity", "first_order_ratio"]);
    let mut min_fid: f64 = 1.0;
    let mut max_ratio: f64 = 0.0;
    for case in 0..t.cases {
        let step: f64 = rng.random_range(-t.max_phase_step_rad..=t.max_phase_step_rad);
        let c = CombSpec { offset_freq_hz: comb.offset_for_phase_step(step), ..*comb };
        let weak = rng.random::<f64>() < t.weak_fraction;
        let (kind, n, d, theta) = if weak {
            (ProtocolKind::OneA, rng.random_range(1..=t.weak_max_pulses), 0, t.weak_rabi_angle_rad)
        } else if rng.random::<bool>() {
            (ProtocolKind::OneB, 2 * rng.random_range(1..=t.max_pulses / 2), 0, FRAC_PI_2)
        } else {
            (
                ProtocolKind::TwoB,
                2 * rng.random_range(1..=t.max_pulses / 2),
                rng.random_range(1..=t.max_delay),
                FRAC_PI_2,
            )
        };
        let spec = ProtocolSpec::new(kind, n, d, theta)?;
        let u = compose_train(&protocol_train(&c, &spec, mpqi::comb::DEFAULT_PAIR_GAP)?, Propagation::Rwa)?;
        let (fid, ratio) = match kind {
            ProtocolKind::OneA => {
                let nt = n as f64 * theta;
                let err = u.matrix().distance(&first_order_1a(theta, step, n));
                let f = unitary_fidelity(&u, &closed_form_1a(theta, step, n)?)?;
                (f, Some(err / (nt * nt)))
            }
            ProtocolKind::OneB => (unitary_fidelity(&u, &closed_form_1b(step, n)?)?, None),
            _ => (unitary_fidelity(&u, &closed_form_2b(step, n, d)?)?, None),
        };
        if let Some(r) = ratio {
            max_ratio = max_ratio.max(r);
        } else {
            min_fid = min_fid.min(fid);
        }
        table.push(vec![
            json!(case),
            json!(kind),
            json!(n),
            json!(d),
            json!(step),
            json!(fid),
            ratio.map_or(Value::Null, |r| json!(r)),
        ]);
    }
    let mut rep = Report::default();
    rep.line(format!("{} cases: min strong-pulse fidelity 1-{:.1e}", t.cases, 1.0 - min_fid));
    rep.line(format!("weak pulses: max |U - first order| / (N theta)^2 = {max_ratio:.3}"));
    rep.note("min_fidelity", min_fid);
    rep.note("max_first_order_ratio", max_ratio);
    rep.tables.push(table);
    Ok(rep)
}

fn permutation(t: &PermutationTask, seed: u64, name: &str) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::new(name, &["N", "set", "analytic", "exhaustive", "difference"]);
    let mut worst: f64 = 0.0;
    for &n in &t.sizes {
        let mut sets =
            vec![("progression".to_string(), (1..=n).map(|m| t.progression_step_rad * m as f64).collect::<Vec<_>>())];
        for j in 0..t.random_sets {
            sets.push((format!("random{j}"), (0..n).map(|_| rng.random_range(-PI..PI)).collect()));
        }
        for (label, phases) in sets {
            let a = optimal_permutation_phase(&phases)?.max_accumulated;
            let e = exhaustive_permutation_phase(&phases)?.max_accumulated;
            worst = worst.max((a - e).abs());
            table.push(vec![json!(n), json!(label), json!(a), json!(e), json!(a - e)]);
        }
    }
    let mut rep = Report::default();
    rep.line(format!("max |analytic - exhaustive| = {worst:.1e}"));
    rep.note("max_difference", worst);
    rep.tables.push(table);
    Ok(rep)
}

/// Largest train composed pulse by pulse in a resolution check.
const MAX_SIMULATED_PULSES: u64 = 100_000;

fn resolution(t: &ResolutionTask, comb: &CombSpec, name: &str) -> Result<Report> {
    let mut table = Table::new(name, &["label", "N", "N_d", "rep_rate_hz", "resolution_hz", "quarter_turn_error"]);
    let mut rep = Report::default();
    for c in &t.cases {
        let res = offset_resolution(t.rep_rate_hz, c.pulse_count as f64, c.delay as f64);
        let error = if c.simulate {
            if c.pulse_count > MAX_SIMULATED_PULSES {
                return Err(CliError::Schema(format!(
                    "case '{}': simulate is limited to N <= {MAX_SIMULATED_PULSES}",
                    c.label
                )));
            }
            // a quarter of the resolution must accumulate a quarter turn
            let base = CombSpec { rep_rate_hz: t.rep_rate_hz, ..*comb };
            let step = TAU / 4.0 * res / t.rep_rate_hz;
            let c2 = CombSpec { offset_freq_hz: base.offset_for_phase_step(step), ..base };
            let spec = ProtocolSpec::new(ProtocolKind::TwoB, c.pulse_count, c.delay, FRAC_PI_2)?;
            let u = compose_train(&protocol_train(&c2, &spec, mpqi::comb::DEFAULT_PAIR_GAP)?, Propagation::Rwa)?;
            Some((sigma_z_angle(&u)?.abs() - FRAC_PI_2).abs())
        } else {
            None
        };
        rep.line(format!(
            "{}: f_rep/(N N_d) = {} Hz{}",
            c.label,
            fmt_sig(res),
            error.map_or(String::new(), |e| format!(" ; quarter-resolution train off by {e:.1e} rad"))
        ));
        table.push(vec![
            json!(c.label),
            json!(c.pulse_count),
            json!(c.delay),
            json!(t.rep_rate_hz),
            json!(res),
            error.map_or(Value::Null, |e| json!(e)),
        ]);
    }
    rep.tables.push(table);
    Ok(rep)
}

fn raman(t: &RamanTask, name: &str) -> Result<Report> {
    let w_at = t.excited_freq_rad_per_s;
    let mut rep = Report::default();
    let mut pulses = Table::new(
        format!("{name}_pulses"),
        &["rabi_fraction", "laser_fraction", "cycles", "envelope", "excited_population", "transfer"],
    );
    let mut worst: f64 = 0.0;
    for p in &t.pulses {
        let w = p.laser_fraction * w_at;
        let l = LambdaSpec {
            envelope: p.envelope,
            rabi_scale: p.rabi_fraction * w_at,
            duration: p.cycles * TAU / w,
            laser_freq: w,
            excited_freq: w_at,
            phase_a: 0.0,
            phase_b: 0.0,
        };
        let out = integrate_lambda(&l, t.steps_per_cycle)?;
        worst = worst.max(out.excited_population);
        pulses.push(vec![
            json!(p.rabi_fraction),
            json!(p.laser_fraction),
            json!(p.cycles),
            json!(p.envelope),
            json!(out.excited_population),
            json!(out.transfer()),
        ]);
    }
    if !t.pulses.is_empty() {
        rep.line(format!("max excited population {worst:.2e}"));
        rep.note("max_excited_population", worst);
        rep.tables.push(pulses);
    }
    if let Some(m) = &t.phase_map {
        let w = m.laser_fraction * w_at;
        let l = LambdaSpec {
            envelope: m.envelope,
            rabi_scale: m.rabi_fraction_of_laser * w,
            duration: m.cycles * TAU / w,
            laser_freq: w,
            excited_freq: w_at,
            phase_a: 0.0,
            phase_b: 0.0,
        };
        let map = phase_map(&l, &uniform_phase_grid(m.points), t.steps_per_cycle)?;
        rep.line(format!(
            "phase map: monotone {} ; max |phi_s - phi_l| {:.3e} rad ({:.3}% of 2pi) ; max slope error {:.2}%",
            map.monotone,
            map.max_deviation,
            100.0 * map.max_deviation / TAU,
            100.0 * map.max_slope_error
        ));
        rep.note("phase_map_monotone", map.monotone);
        rep.note("phase_map_max_deviation", map.max_deviation);
        rep.note("phase_map_max_slope_error", map.max_slope_error);
        rep.tables.push(Table::from_records(
            format!("{name}_phase_map"),
            &["phi_l", "phi_s", "dphi_s_dphi_l"],
            &map.points,
        )?);
    }
    if rep.tables.is_empty() {
        return Err(CliError::Schema("raman needs pulses or a phase_map".into()));
    }
    Ok(rep)
}

fn visibility(t: &VisibilityTask, name: &str) -> Result<Report> {
    let mut table = Table::new(name, &["lifetime_s", "excited_time_s", "epsilon", "pulses"]);
    let mut rep = Report::default();
    for &life in &t.lifetimes_s {
        let n = visibility_budget(1.0 / life, t.excited_time_s, t.epsilon)?;
        rep.line(format!("lifetime {} s: {n} pulses", fmt_sig(life)));
        table.push(vec![json!(life), json!(t.excited_time_s), json!(t.epsilon), json!(n)]);
    }
    rep.tables.push(table);
    Ok(rep)
}

fn noise(t: &NoiseTask, comb: &CombSpec, seed: u64, name: &str) -> Result<Report> {
    let mut table = Table::new(name, &["quantity", "value", "unit"]);
    let mut rep = Report::default();
    if let Some(d) = &t.dephasing {
        let spec = ProtocolSpec::new(ProtocolKind::TwoB, 2, 1, FRAC_PI_2)?;
        let train = protocol_train(comb, &spec, d.pair_gap_s)?;
        let mut ms = 0.0;
        for s in 0..d.trials {
            let e =
                dephase_train(&train, &DephasingSpec::from_hz(d.sigma_hz, d.correlation_time_s, seed.wrapping_add(s)))?;
            ms += e.pair_errors()[0].powi(2);
        }
        let rms = (ms / d.trials.max(1) as f64).sqrt();
        rep.line(format!(
            "dephasing {} Hz over a {} s pair gap: rms phase error {rms:.3e} rad",
            d.sigma_hz,
            fmt_sig(d.pair_gap_s)
        ));
        table.push(vec![json!("dephasing_rms_phase_error"), json!(rms), json!("rad")]);
    }
    if let Some(th) = &t.thermal {
        let mut spec = match th.species {
            Species::Beryllium9 => ThermalSpec::beryllium(),
        };
        if let Some(hz) = th.linewidth_hz {
            spec.linewidth = TAU * hz;
        }
        if let Some(w) = th.wavelength_m {
            spec.wavelength_m = w;
        }
        let v = spec.velocity();
        let dphi = doppler_phase_error(&spec, th.gap_s)?;
        let co = doppler_phase_error(&ThermalSpec { copropagating_raman: true, ..spec }, th.gap_s)?;
        rep.line(format!(
            "Doppler: v = {v:.3} m/s ; phase error over {} s = {dphi:.3e} rad ; co-propagating {co}",
            fmt_sig(th.gap_s)
        ));
        table.push(vec![json!("thermal_velocity"), json!(v), json!("m/s")]);
        table.push(vec![json!("doppler_temperature"), json!(spec.temperature()), json!("K")]);
        table.push(vec![json!("doppler_phase_error"), json!(dphi), json!("rad")]);
        table.push(vec![json!("doppler_phase_error_copropagating"), json!(co), json!("rad")]);
    }
    if table.rows.is_empty() {
        return Err(CliError::Schema("noise needs a dephasing or thermal section".into()));
    }
    rep.tables.push(table);
    Ok(rep)
}

fn estimate(t: &EstimateTask, seed: u64, name: &str) -> Result<Report> {
    let cols = [
        "kind",
        "N",
        "N_d",
        "theta",
        "phase_step",
        "xi",
        "seeds",
        "failures",
        "mean_phase",
        "var_phase",
        "crlb_phase",
        "ratio",
        "slack",
    ];
    let mut table = Table::new(name, &cols);
    let mut rep = Report::default();
    let opts = EstimateOptions { theta_mode: t.theta_mode, ..Default::default() };
    for (idx, p) in t.points.iter().enumerate() {
        // zero area until the design picks one
        let base = ProtocolSpec::new(p.kind, p.pulse_count, p.delay, 0.0)?;
        let k = p.design.unwrap_or_default().point(&base);
        let model = ramsey_model(&ProtocolSpec { rabi_angle: k.theta, ..base })?;
        let (xi, _) = optimize_reference_phase(&model, k, t.shots, t.theta_mode, XI_GRID_POINTS)?;
        let model = model.with_reference_phase(xi);
        let seeds: Vec<u64> = (0..t.seeds as u64).map(|s| seed.wrapping_add(((idx as u64) << 32) | s)).collect();
        let mc = monte_carlo(&model, k, t.shots, &seeds, &opts)?;
        rep.line(format!(
            "{} N={} N_d={}: Var/CRLB = {:.3} ({} failures)",
            p.kind,
            p.pulse_count,
            p.delay,
            mc.phase_ratio(),
            mc.failures
        ));
        table.push(vec![
            json!(p.kind),
            json!(p.pulse_count),
            json!(p.delay),
            json!(k.theta),
            json!(k.phase_step),
            json!(xi),
            json!(mc.seeds),
            json!(mc.failures),
            json!(mc.mean_phase),
            json!(mc.var_phase),
            json!(mc.crlb_phase),
            json!(mc.phase_ratio()),
            json!(mc.ratio_slack()),
        ]);
    }
    rep.tables.push(table);
    Ok(rep)
}

fn axis_value(axis: ScanAxis, n: f64, n_d: f64) -> f64 {
    match axis {
        ScanAxis::PulseCount => n,
        ScanAxis::Delay => n_d,
        ScanAxis::Product => n * n_d,
    }
}

fn scan(t: &ScanTask, seed: u64, name: &str) -> Result<Report> {
    let cols = ["kind", "N", "N_d", "M", "sigma_dphi", "crlb", "ratio", "xi", "failures"];
    let mut table = Table::new(name, &cols);
    let mut rep = Report::default();
    let mut fits = Vec::new();
    for (idx, s) in t.series.iter().enumerate() {
        let mut sc = ScanConfig::new(s.kind, s.points.clone(), t.shots, t.seeds);
        sc.base_seed = seed.wrapping_add((idx as u64) << 48);
        sc.theta_mode = t.theta_mode;
        sc.design = t.design.unwrap_or_default();
        if let Some(a) = s.axis {
            sc.axis = a;
        }
        let r = sensitivity_scan(&sc)?;
        for row in &r.rows {
            table.push(vec![
                json!(s.kind),
                json!(row.n),
                json!(row.n_d),
                json!(row.m),
                json!(row.sigma_dphi),
                json!(row.crlb),
                json!(row.ratio),
                json!(row.xi),
                json!(row.failures),
            ]);
        }
        rep.line(format!(
            "{}: slope vs {:?} = {:.3} ± {:.3} (bound {:.3}){}",
            s.kind,
            r.fit.axis,
            r.fit.slope,
            r.fit.stderr,
            r.crlb_fit.slope,
            r.plane_fit.map_or(String::new(), |p| format!(
                " ; plane: N {:.3} ± {:.3}, N_d {:.3} ± {:.3}",
                p.pulse_slope, p.pulse_stderr, p.delay_slope, p.delay_stderr
            ))
        ));
        let mut extrapolated = Vec::new();
        for &(n, n_d) in &s.extrapolate {
            let sigma = r.extrapolate(axis_value(r.fit.axis, n, n_d));
            rep.line(format!(
                "  extrapolated to N = {}, N_d = {} at M = {}: sigma_dphi ≈ {sigma:.2e} rad",
                fmt_sig(n),
                fmt_sig(n_d),
                t.shots
            ));
            extrapolated.push(json!({"N": n, "N_d": n_d, "sigma_dphi": sigma}));
        }
        let mut side = r.sidecar_json();
        if let Value::Object(m) = &mut side {
            m.insert("extrapolated".into(), Value::Array(extrapolated));
        }
        fits.push(side);
    }
    rep.note("fits", fits);
    rep.tables.push(table);
    Ok(rep)
}

fn refine(t: &RefineTask, comb: &CombSpec, seed: u64, name: &str) -> Result<Report> {
    let cols = ["run", "stage", "N", "residual_before", "estimate", "residual_after", "crlb_sigma", "xi", "backed_off"];
    let mut table = Table::new(name, &cols);
    let mut rep = Report::default();
    let mut sq = 0.0;
    let mut bound: f64 = 0.0;
    let mut max_stages = 0;
    for run in 0..t.runs {
        let mut rc = RefineConfig::new(*comb);
        rc.seed = seed.wrapping_add(1_000 * run);
        if let Some(k) = t.kind {
            rc.kind = k;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = t.$f { rc.$f = v; })*};
        }
        set!(shots, growth, max_pulses, max_stages, safety, theta_mode);
        rc.initial_pulses = t.initial_pulses;
        if let Some(n) = t.initial_pulses.filter(|&n| run == 0 && n > rc.safe_initial_pulses()) {
            // an aliased first stage cannot be told apart from a small step
            log::warn!(
                "initial_pulses {n} exceeds the safe start {}; a wrapped first stage goes unnoticed",
                rc.safe_initial_pulses()
            );
        }
        let trace = iterative_refine(&rc)?;
        for s in &trace.stages {
            table.push(vec![
                json!(run),
                json!(s.stage),
                json!(s.n),
                json!(s.residual_before),
                json!(s.estimate),
                json!(s.residual_after),
                json!(s.crlb_sigma),
                json!(s.xi),
                json!(s.backed_off),
            ]);
        }
        max_stages = max_stages.max(trace.stages.len());
        sq += trace.final_residual.powi(2);
        bound = bound.max(trace.final_crlb_sigma);
    }
    let rms = (sq / t.runs.max(1) as f64).sqrt();
    rep.line(format!(
        "{} run(s) from a {} Hz offset: up to {max_stages} stages ; rms final residual {rms:.3e} rad vs CRLB {bound:.3e} rad (ratio {:.2})",
        t.runs,
        fmt_sig(comb.offset_freq_hz),
        rms / bound
    ));
    rep.note("rms_final_residual", rms);
    rep.note("final_crlb_sigma", bound);
    rep.note("max_stages", max_stages);
    rep.tables.push(table);
    Ok(rep)
}

/// Compact number for console lines: integers plain, others in `e` form.
fn fmt_sig(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x}")
    } else {
        format!("{x:.4e}")
    }
}
