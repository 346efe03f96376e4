use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use mpqi::comb::CombSpec;
use mpqi::dynamics::{unitary_fidelity, Envelope, DEFAULT_STEPS_PER_CYCLE};
use mpqi::linalg::{exp_i_sigma_x, exp_i_sigma_z};
use mpqi::noise::{dephase_train, DephasingSpec};
use mpqi::protocols::{protocol_train, ProtocolKind, ProtocolSpec};
use mpqi::raman::{effective_qubit_unitary, integrate_lambda, integrate_lambda_rwa, LambdaSpec, RamanEffective};

fn rms_pair_error(gap: f64, seeds: u64) -> f64 {
    let spec = ProtocolSpec::new(ProtocolKind::TwoB, 2, 1, FRAC_PI_2).unwrap();
    let train = protocol_train(&CombSpec::fiber(), &spec, gap).unwrap();
    let ms = (0..seeds)
        .map(|s| dephase_train(&train, &DephasingSpec::from_hz(100.0, 1e-3, s)).unwrap().pair_errors()[0].powi(2))
        .sum::<f64>()
        / seeds as f64;
    ms.sqrt()
}

#[test]
fn dephasing_error_grows_linearly_with_gap() {
    let gaps = [5e-12, 10e-12, 20e-12, 40e-12, 80e-12];
    let xs: Vec<f64> = gaps.iter().map(|g: &f64| g.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|&g| rms_pair_error(g, 2_000).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.0).abs() <= 0.05, "slope {slope}");
    // a slowly varying field behaves as a constant: rms error ≈ σ_ε·gap
    let rms = rms_pair_error(10e-12, 2_000);
    assert!((rms / (TAU * 100.0 * 10e-12) - 1.0).abs() < 0.1, "{rms}");
}

#[test]
fn effective_unitary_is_conjugated_rotation() {
    let r = RamanEffective {
        rabi_angle: FRAC_PI_4 / 40.0,
        phase_step: 0.003,
        delay: 7,
        laser_freq: 2.0e15,
        delay_mismatch: 1e-18,
        rep_period: 1e-8,
    };
    let u = effective_qubit_unitary(&r, 40).unwrap();
    let phi = 7.0 * (0.003 + 2.0e15 * 1e-18);
    let expected = exp_i_sigma_z(-phi) * exp_i_sigma_x(FRAC_PI_4) * exp_i_sigma_z(phi);
    assert!(unitary_fidelity(&u, &expected).unwrap() > 1.0 - 1e-12);
    // a perfect delay line measures the true step
    let ideal = RamanEffective { delay_mismatch: 0.0, ..r };
    assert_eq!(ideal.measured_phase_step(), 0.003);
}

#[test]
fn slow_raman_pulse_matches_rotating_wave_limit() {
    let l = LambdaSpec {
        envelope: Envelope::Cos2,
        rabi_scale: 0.01,
        duration: 60.0 * TAU / 0.8,
        laser_freq: 0.8,
        excited_freq: 1.0,
        phase_a: 0.0,
        phase_b: 0.4,
    };
    let full = integrate_lambda(&l, DEFAULT_STEPS_PER_CYCLE).unwrap();
    let rwa = integrate_lambda_rwa(&l, DEFAULT_STEPS_PER_CYCLE).unwrap();
    assert!(full.unitary.matrix().unitarity_defect() < 1e-8);
    assert!(unitary_fidelity(&full.unitary, &rwa.unitary).unwrap() > 1.0 - 1e-3);
    assert!(full.excited_population < 1e-3);
}
