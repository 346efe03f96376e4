use std::f64::consts::FRAC_PI_2;

use mpqi::comb::{CombSpec, PhaseConvention};
use mpqi::error::Error;
use mpqi::estimation::{
    crlb, expected_record, fisher_matrix, fisher_matrix_for, iterative_refine, ml_estimate, monte_carlo,
    optimize_reference_phase, sample_record, sensitivity_scan, EstimateOptions, MeasurementRecord, Params,
    RefineConfig, ScanAxis, ScanConfig, ScanDesign, ThetaMode,
};
use mpqi::protocols::{ramsey_model, Arm, ProtocolKind, ProtocolSpec};

fn strong_point(kind: ProtocolKind, n: u64, d: u64) -> (mpqi::protocols::RamseyOutcomeModel, Params) {
    let base = ProtocolSpec::new(kind, n, d, FRAC_PI_2).unwrap();
    let k = ScanDesign::default().point(&base);
    let model = ramsey_model(&ProtocolSpec { rabi_angle: k.theta, ..base }).unwrap();
    (model, k)
}

#[test]
fn fair_coin_counts_stay_near_half() {
    // at θ = π/2 and Δφ = 0 the 1B Ramsey arm with ξ = π/2 sits at P = 1/2
    let spec = ProtocolSpec::new(ProtocolKind::OneB, 2, 0, FRAC_PI_2).unwrap().with_reference_phase(FRAC_PI_2);
    let model = ramsey_model(&spec).unwrap();
    let k = Params::new(FRAC_PI_2, 0.0);
    assert!((model.evaluate(k.theta, k.phase_step).p1[1] - 0.5).abs() < 1e-12);
    for seed in 0..200 {
        let ones = sample_record(&model, k, 10_000, seed).unwrap().counts(Arm::Ramsey).unwrap()[1];
        assert!((4_700..=5_300).contains(&ones), "seed {seed}: {ones}");
    }
}

#[test]
fn one_b_at_thousand_pulses_meets_bound() {
    let (model, k) = strong_point(ProtocolKind::OneB, 1_000, 0);
    let (xi, _) = optimize_reference_phase(&model, k, 10_000, ThetaMode::Fit, 256).unwrap();
    let model = model.with_reference_phase(xi);
    let seeds: Vec<u64> = (0..500).collect();
    let mc = monte_carlo(&model, k, 10_000, &seeds, &EstimateOptions::default()).unwrap();
    let ratio = mc.var_phase.sqrt() / mc.crlb_phase.sqrt();
    assert_eq!(mc.failures, 0);
    assert!((ratio - 1.0).abs() <= 0.2, "σ/σ_CRLB = {ratio}");
    // unbiased to well within the spread
    assert!((mc.mean_phase - k.phase_step).abs() < 4.0 * mc.var_phase.sqrt() / (500f64).sqrt());
}

#[test]
fn one_b_bound_scales_as_inverse_pulse_count() {
    // θ = π/2 and ξ optimal: σ = 1/(2N√M)
    for n in [100u64, 1_000, 10_000] {
        let spec = ProtocolSpec::new(ProtocolKind::OneB, n, 0, FRAC_PI_2).unwrap();
        let model = ramsey_model(&spec).unwrap();
        let k = Params::new(FRAC_PI_2, 0.0);
        let (xi, info) = optimize_reference_phase(&model, k, 10_000, ThetaMode::Known, 256).unwrap();
        let sigma = 1.0 / info.sqrt();
        let expected = 1.0 / (2.0 * n as f64 * 100.0);
        assert!((sigma / expected - 1.0).abs() < 1e-6, "N = {n}: {sigma} vs {expected} at ξ = {xi}");
    }
}

#[test]
fn ramsey_arm_alone_cannot_separate_area_and_phase() {
    for kind in ProtocolKind::ALL {
        let (n, d) = if kind.is_paired() { (20, 5) } else { (20, 0) };
        let base = ProtocolSpec::new(kind, n, d, if kind.is_weak() { 0.005 } else { FRAC_PI_2 }).unwrap();
        let k = ScanDesign::default().point(&base);
        let model = ramsey_model(&ProtocolSpec { rabi_angle: k.theta, ..base }).unwrap().with_reference_phase(0.7);
        let ramsey_only = fisher_matrix_for(&model, k, 10_000, &[Arm::Ramsey]).unwrap();
        assert!(ramsey_only.is_singular(), "{kind}");
        assert!(!fisher_matrix(&model, k, 10_000).unwrap().is_singular(), "{kind}");

        let full = sample_record(&model, k, 10_000, 3).unwrap();
        let rec = full.only(Arm::Ramsey).unwrap();
        assert!(
            matches!(ml_estimate(&rec, &model, k, &EstimateOptions::default()), Err(Error::DegenerateFit(_))),
            "{kind}"
        );
        // with θ calibrated the Ramsey arm suffices
        assert!(ml_estimate(&rec, &model, k, &EstimateOptions::known_theta()).is_ok(), "{kind}");
    }
}

#[test]
fn inconsistent_records_rejected() {
    assert!(MeasurementRecord::new(10, Some([3, 6]), None).is_err());
    assert!(MeasurementRecord::new(10, None, None).is_err());
    assert!(MeasurementRecord::new(10, Some([4, 6]), Some([10, 0])).is_ok());
}

#[test]
fn wrapped_phase_reports_ambiguity() {
    let (model, k) = strong_point(ProtocolKind::OneB, 200, 0);
    let (xi, _) = optimize_reference_phase(&model, k, 10_000, ThetaMode::Known, 256).unwrap();
    let model = model.with_reference_phase(xi);
    let rec = expected_record(&model, k, 1_000_000_000_000).unwrap();
    // a narrow window on the falling flank of the fringe, away from the truth
    // and its mirror image: the likelihood climbs out through one edge
    let off = Params::new(k.theta, k.phase_step - 5.5e-3);
    let opts = EstimateOptions { phase_window: Some(2e-3), ..EstimateOptions::known_theta() };
    let result = ml_estimate(&rec, &model, off, &opts);
    assert!(matches!(result, Err(Error::Ambiguity(_))), "{result:?}");
    assert!(ml_estimate(&rec, &model, k, &EstimateOptions::known_theta()).is_ok());
}

#[test]
fn crlb_is_inverse_information() {
    let (model, k) = strong_point(ProtocolKind::TwoB, 100, 10);
    let f = fisher_matrix(&model.with_reference_phase(1.1), k, 10_000).unwrap();
    let c = crlb(&f);
    let m = f.matrix();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    assert!((c.variances[1] - m[0][0] / det).abs() <= 1e-12 * c.variances[1]);
    assert!((c.variances[0] - m[1][1] / det).abs() <= 1e-12 * c.variances[0]);
}

#[test]
fn weak_protocol_scans_report_their_slopes() {
    // weak-pulse slopes are reported, not forced to any value
    let cfg = ScanConfig::new(ProtocolKind::OneA, vec![(10, 0), (100, 0), (1_000, 0)], 10_000, 50);
    let one_a = sensitivity_scan(&cfg).unwrap();
    assert_eq!(one_a.fit.axis, ScanAxis::PulseCount);
    assert!(one_a.fit.slope.is_finite() && one_a.fit.slope < 0.0);
    assert!(one_a.rows.iter().all(|r| r.failures == 0));

    let cfg =
        ScanConfig::new(ProtocolKind::TwoA, vec![(20, 100), (20, 1_000), (200, 1_000), (200, 10_000)], 10_000, 50);
    let two_a = sensitivity_scan(&cfg).unwrap();
    assert_eq!(two_a.fit.axis, ScanAxis::Delay);
    assert!((two_a.crlb_fit.slope + 1.0).abs() < 0.1, "{:?}", two_a.crlb_fit);
    assert!(two_a.plane_fit.is_some());
}

#[test]
fn scans_are_reproducible() {
    let cfg = ScanConfig::new(ProtocolKind::TwoB, vec![(20, 4), (40, 4)], 1_000, 40);
    let a = sensitivity_scan(&cfg).unwrap();
    let b = sensitivity_scan(&cfg).unwrap();
    assert_eq!(a, b);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("N,N_d,M,sigma_dphi,crlb,ratio,xi,failures"), "{text}");
}

#[test]
fn cycles_convention_starts_at_five_hundred_pulses() {
    let mut comb = CombSpec::fiber().with_convention(PhaseConvention::Cycles);
    comb.offset_freq_hz = 100e3;
    let mut cfg = RefineConfig::new(comb);
    cfg.initial_pulses = Some(500);
    cfg.seed = 11;
    let trace = iterative_refine(&cfg).unwrap();
    let first = &trace.stages[0];
    assert_eq!(first.n, 500);
    assert!((first.crlb_sigma - 1e-5).abs() < 1e-9, "{}", first.crlb_sigma);
    assert!(trace.final_residual.abs() < 5.0 * trace.final_crlb_sigma);
}

#[test]
fn refinement_residual_shrinks_each_stage() {
    let mut cfg = RefineConfig::new(CombSpec::fiber());
    cfg.seed = 5;
    let trace = iterative_refine(&cfg).unwrap();
    assert_eq!(trace.stages[0].n, 50);
    for w in trace.stages.windows(2) {
        assert_eq!(w[1].n, 4 * w[0].n);
        assert!(w[1].crlb_sigma < w[0].crlb_sigma);
    }
    assert!(trace.final_residual.abs() < 5.0 * trace.final_crlb_sigma);
}
