mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use srv6sim::cli::{cmd_owd, cmd_run, cmd_traceroute, Status};
use srv6sim::scenario::{Overrides, ScenarioConfig, TraceConfig};
use srv6sim::usecases::traceroute::TracerouteOptions;

fn srv6sim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_srv6sim")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const LOSSY: &str = r#"{
  "name": "lossy", "seed": 3, "duration_ms": 100,
  "nodes": [
    { "name": "A", "addresses": ["fc00:1::1"] },
    { "name": "B", "addresses": ["fc00:2::1"] }
  ],
  "links": [{ "a": "A", "b": "B", "bandwidth_mbps": 10, "rtt_mean_ms": 1 }],
  "routes": [{ "node": "A", "prefix": "fc00:2::/48", "via": ["B"] }],
  "generators": [{ "node": "A", "dst": "fc00:9::1", "rate_pps": 100, "payload_size": 100, "count": 5 }]
}"#;

#[test]
fn every_fixture_matches_its_own_schema_shape() {
    for name in ["setup1.json", "setup2-hybrid.json", "diamond.json", "chain.json"] {
        let (cfg, digest) = ScenarioConfig::load(&common::scenario_path(name)).unwrap();
        assert_eq!(digest.len(), 64, "{name}");
        srv6sim::scenario::build_simulation(&cfg).unwrap();
    }
}

#[test]
fn owd_on_the_zero_jitter_fixture() {
    let out = cmd_owd(&common::scenario_path("setup1.json"), &Overrides::default(), None).unwrap();
    assert_eq!(out.status, Status::Ok);
    let r = &out.report;
    assert_eq!(r.get("probes"), Some(1000.0));
    assert_eq!(r.get("owd_min"), r.get("owd_max"));
    assert!((r.get("owd_mean").unwrap() - 15.001792).abs() < 1e-9);
}

#[test]
fn seed_override_keeps_the_digest() {
    let path = common::scenario_path("setup2-hybrid.json");
    let a = cmd_run(&path, &Overrides::default(), None).unwrap();
    let o = Overrides {
        seed: Some(99),
        ..Overrides::default()
    };
    let b = cmd_run(&path, &o, None).unwrap();
    assert_eq!(a.report.config_digest, b.report.config_digest);
    assert!(a.report.config_digest.is_some());
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("chain.json");
    let (code, stdout, _) = srv6sim(&["--format", "tsv", "run", path_str(&scenario), "--out", path_str(dir.path())]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("metric\tdelivered\t"));
    assert!(stdout.contains("config_sha256\t"));
    assert!(dir.path().join("trace.tsv").exists());
    assert!(dir.path().join("report.tsv").exists());
}

#[test]
fn unknown_node_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = LOSSY.replace(r#""node": "A", "prefix""#, r#""node": "Z", "prefix""#);
    fs::write(&bad, text).unwrap();
    let (code, _, stderr) = srv6sim(&["run", path_str(&bad)]);
    assert_eq!(code, 2);
    assert!(stderr.contains("routes"), "{stderr}");
}

#[test]
fn unknown_field_reports_its_position() {
    let err = ScenarioConfig::from_json_str(r#"{"name": "x", "duration_ms": 1, "nodes": [], "bogus": 1}"#)
        .unwrap_err()
        .to_string();
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn dropping_everything_is_a_drop_storm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lossy.json");
    fs::write(&path, LOSSY).unwrap();
    let (code, stdout, _) = srv6sim(&["run", path_str(&path)]);
    assert_eq!(code, 3, "{stdout}");
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let scenario = common::scenario_path("chain.json");
    let (code, _, _) = srv6sim(&["run", path_str(&scenario), "--out", path_str(&blocker.join("sub"))]);
    assert_eq!(code, 1);
}

#[test]
fn linear_traceroute_reaches_the_target() {
    let opts = TracerouteOptions::default();
    let path = common::scenario_path("chain.json");
    let out = cmd_traceroute(&path, &Overrides::default(), "S", "T", true, &opts).unwrap();
    assert_eq!(out.status, Status::Ok);
    let body = out.report.body.unwrap();
    for n in ["(R1)", "(R2)", "(T)"] {
        assert!(body.contains(n), "{body}");
    }
}

#[test]
fn traceroute_to_nowhere_is_partial() {
    let scenario = common::scenario_path("chain.json");
    let (code, stdout, _) = srv6sim(&[
        "traceroute",
        path_str(&scenario),
        "--src",
        "S",
        "--target",
        "fc00:99::1",
        "--timeout-ms",
        "500",
    ]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("target not reached"), "{stdout}");
}

#[test]
fn hybrid_cli_reports_both_modes() {
    let scenario = common::scenario_path("setup2-hybrid.json");
    let mut goodput = Vec::new();
    for mode in ["off", "on"] {
        let (code, stdout, _) = srv6sim(&["--format", "tsv", "hybrid", path_str(&scenario), "--compensation", mode]);
        assert_eq!(code, 0, "{stdout}");
        let line = stdout.lines().find(|l| l.starts_with("metric\tgoodput_estimate\t")).unwrap();
        goodput.push(line.split('\t').nth(2).unwrap().parse::<f64>().unwrap());
    }
    assert!(goodput[1] > goodput[0], "{goodput:?}");
}

#[test]
fn trace_off_override_empties_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        trace: Some(TraceConfig::Mode("off".into())),
        ..Overrides::default()
    };
    cmd_run(&common::scenario_path("chain.json"), &o, Some(dir.path())).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.tsv")).unwrap();
    assert!(trace.lines().count() <= 1, "{trace}");
}

#[test]
fn bench_runs_a_subset() {
    let (code, stdout, _) = srv6sim(&["bench", "--functions", "plain,end_native", "--packets", "10000", "--trials", "1"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("end_native.pps"), "{stdout}");
    let (code, _, _) = srv6sim(&["bench", "--functions", "nope"]);
    assert_eq!(code, 2);
}
