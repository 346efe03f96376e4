use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mpqi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpqi")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut all = args.to_vec();
    all.extend(["--out", out]);
    mpqi(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn lists_bundled_scenarios() {
    let o = mpqi(&["list"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().count() >= 6);

    let o = mpqi(&["list", "--tag", "acceptance", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert!(entries.len() >= 6);
    // each numbered criterion has a scenario
    for k in 1..=10 {
        let tag = format!("criterion-{k}");
        assert!(entries.iter().any(|e| e["tags"].as_array().unwrap().iter().any(|t| t == tag.as_str())), "{tag}");
    }

    let o = mpqi(&["list", "--tag", "criterion-4", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["name"], "sensitivity_scaling");
}

#[test]
fn rwa_validity_writes_curve_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["pulse", "rwa_validity"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("rwa_validity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cycles,fidelity,infidelity"));
    let infidelity: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(infidelity.len(), 5);
    assert!(infidelity.windows(2).all(|w| w[1] <= w[0]));

    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    for key in ["scenario", "schema_version", "seed", "git_rev", "started_at", "config_sha256"] {
        assert!(!m[key].is_null(), "{key}");
    }
    assert_eq!(m["scenario"], "rwa_validity");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn sensitivity_scaling_reports_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["scan", "sensitivity_scaling"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("1B: slope") && text.contains("2B: slope"), "{text}");
    assert!(text.contains("extrapolated"), "{text}");
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for fit in summary["fits"].as_array().unwrap() {
        let slope = fit["slope"].as_f64().unwrap();
        assert!((slope + 1.0).abs() <= 0.05, "{fit}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let config = "schema_version = 1\nseed = 9\n[scan]\nshots = 1000\nseeds = 40\n\
                  [[scan.series]]\nkind = \"1B\"\npoints = [[10, 0], [100, 0]]\n";
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small.toml", config);
    let mut tables = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = dir.path().join(sub);
        let o = run_in(&out, &["scan", &path, "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(fs::read(out.join("small.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[1], tables[2]);

    let out = dir.path().join("d");
    assert!(run_in(&out, &["scan", &path, "--seed", "10"]).status.success());
    assert_ne!(fs::read(out.join("small.csv")).unwrap(), tables[0]);
}

#[test]
fn json_format_matches_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(&dir.path().join("csv"), &["raman", "visibility_budget"]).status.success());
    assert!(run_in(&dir.path().join("json"), &["raman", "visibility_budget", "--format", "json"]).status.success());
    let csv = fs::read_to_string(dir.path().join("csv/visibility_budget.csv")).unwrap();
    let js: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("json/visibility_budget.json")).unwrap()).unwrap();
    assert_eq!(js[0]["pulses"], 184);
    assert!(csv.lines().nth(1).unwrap().ends_with(",184"));
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("empty.toml", ""),
        ("unknown.toml", "schema_version = 1\ncolour = 3\n[pulse]\ncycles = [5.0]\n"),
        ("future.toml", "schema_version = 7\n[pulse]\ncycles = [5.0]\n"),
        ("two.toml", "schema_version = 1\n[pulse]\ncycles = [5.0]\n[visibility]\nlifetimes_s = [8e-9]\nexcited_time_s = 1e-10\nepsilon = 0.1\n"),
        ("odd.toml", "schema_version = 1\n[protocol]\nkind = \"1B\"\npulse_count = 7\n"),
    ];
    for (name, text) in cases {
        let path = write_config(dir.path(), name, text);
        let o = run_in(&dir.path().join("out"), &["run", &path]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    // wrong subcommand for the section
    assert_eq!(run_in(&dir.path().join("out"), &["scan", "rwa_validity"]).status.code(), Some(2));
    assert_eq!(mpqi(&["run", "no_such_scenario"]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    // zero pulse area carries no information on either parameter
    let config = "schema_version = 1\n[estimate]\nshots = 1000\nseeds = 8\n\
                  [[estimate.points]]\nkind = \"1A\"\npulse_count = 10\n\
                  design = { theta_offset = 0.0, phase_fraction = 0.3 }\n";
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "flat.toml", config);
    let o = run_in(&dir.path().join("out"), &["estimate", &path]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn wrap_ambiguity_exits_4() {
    // 187.5 kHz on 100 MHz puts 200 and 1000 pulses on a fringe extremum
    let config = "schema_version = 1\n[comb]\npreset = \"fiber\"\noffset_hz = 187500.0\n\
                  [refine]\ninitial_pulses = 1000\ngrowth = 5\n";
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "wrap.toml", config);
    let o = run_in(&dir.path().join("out"), &["refine", &path]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wrap"));
}

#[test]
fn show_prints_bundled_toml() {
    let o = mpqi(&["show", "visibility_budget"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("[visibility]"));
}
