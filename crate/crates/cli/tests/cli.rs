use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use thermosched_cli::presets;
use thermosched_cli::{parse_scenario, props, run, CliError, PropsConfig};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermosched"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TWO_ARRIVALS: &str = r#"
deadline = 4.0

[thermal]
a = 0.1
b = 0.5
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 8.0

[[arrivals]]
time = 1.75
energy = 9.0
"#;

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario(TWO_ARRIVALS).unwrap();
    let out = run(&sc, dir.path()).unwrap();
    assert!(out.certified());
    for name in ["trajectory.csv", "summary.json", "checks.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["certified"], true);
    assert_eq!(summary["regime"]["regime"], "multi_arrival");
    assert!(summary["kkt"]["stationarity"].as_f64().unwrap() < 1e-5);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("1.75,")));
    assert!(csv.lines().last().unwrap().starts_with("4,"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = parse_scenario(TWO_ARRIVALS).unwrap();
    run(&sc, a.path()).unwrap();
    run(&sc, b.path()).unwrap();
    for name in ["trajectory.csv", "summary.json", "checks.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn zero_energy_scenario_is_trivially_certified() {
    let dir = tempfile::tempdir().unwrap();
    let sc = parse_scenario(
        &TWO_ARRIVALS
            .replace("energy = 8.0", "energy = 0.0")
            .replace("energy = 9.0", "energy = 0.0"),
    )
    .unwrap();
    let out = run(&sc, dir.path()).unwrap();
    assert!(out.certified());
    assert_eq!(out.report.throughput, 0.0);
}

#[test]
fn solve_subcommand_exit_status_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), TWO_ARRIVALS).unwrap();
    let out = bin(
        &[
            "solve", "s.toml", "--out", "res", "--grid", "1024", "--oracle",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("certified: true"));
    let summary = fs::read_to_string(dir.path().join("res/summary.json")).unwrap();
    assert!(summary.contains("\"oracle\""));
}

#[test]
fn invalid_scenario_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = TWO_ARRIVALS
        .replace("t_crit = 38.0", "t_crit = 36.0")
        .replace("time = 1.75", "time = 5.0");
    fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let out = bin(&["solve", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("thermal.t_crit") && err.contains("arrivals[1].time"),
        "{err}"
    );
}

#[test]
fn figure_presets_report_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["figure", "8"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS saturation_power"));
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("figure-8/summary.json")).unwrap(),
    )
    .unwrap();
    assert!((summary["saturation_power"].as_f64().unwrap() - 10.12).abs() < 1e-9);
    assert_eq!(summary["energy_wasted"], true);
    let scenario = fs::read_to_string(dir.path().join("figure-8/scenario.toml")).unwrap();
    assert_eq!(
        parse_scenario(&scenario).unwrap(),
        presets::scenario(8).unwrap()
    );

    assert!(!bin(&["figure", "3"], dir.path()).status.success());
}

#[test]
fn compare_subcommand_reports_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), TWO_ARRIVALS).unwrap();
    let out = bin(&["compare", "s.toml", "--grid", "1024"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("relative"));
}

#[test]
fn props_pass_on_seeded_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    for (arrivals, trials) in [(1, 50), (2, 25)] {
        let cfg = PropsConfig {
            seed: 1,
            trials,
            arrivals,
            inject_fault: false,
            out_dir: dir.path().into(),
        };
        let report = props(&cfg).unwrap();
        assert_eq!(report.failure, None);
        assert_eq!(report.passed, trials);
    }
}

#[test]
fn injected_fault_is_located_and_dumped() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(
        &[
            "props",
            "--seed",
            "5",
            "--trials",
            "2",
            "--arrivals",
            "2",
            "--inject-fault",
            "--out",
            "f",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let line = text
        .lines()
        .find(|l| l.contains("failed check jumps"))
        .expect("jump check not reported");
    assert!(line.contains("at t ="), "{line}");
    let dumped = fs::read_dir(dir.path().join("f"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    parse_scenario(&fs::read_to_string(dumped).unwrap()).unwrap();
}

#[test]
fn malformed_documents_are_parse_errors() {
    let err = parse_scenario("deadline = ").unwrap_err();
    assert!(matches!(err, CliError::Parse(_)));
}
