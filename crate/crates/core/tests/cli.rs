//! End-to-end checks of the `leaksim` binary: files written, exit codes
//! and byte-stable output.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use leaksim::output::{audit_from_trace, parse_events_jsonl, parse_trace_csv, TRACE_HEADER};
use leaksim::Scenario;
use tempfile::TempDir;

fn leaksim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leaksim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A fifteen-minute, small-capacitor scenario written to `dir`.
fn short_scenario_file(dir: &Path) -> String {
    let text = "\
[run]
duration_s = 900.0
seed = 5

[storage]
capacitance_f = 0.5
";
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario_file(tmp.path());
    let out = tmp.path().join("out");
    let o = leaksim(&["run", &scenario, "-o", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("activation:"));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some(TRACE_HEADER));
    let rows = parse_trace_csv(&trace).unwrap();
    assert_eq!(rows.len(), 901);

    let events = parse_events_jsonl(&fs::read_to_string(out.join("events.jsonl")).unwrap()).unwrap();
    assert!(events.iter().any(|e| e.kind() == "gate_close"));
    for line in fs::read_to_string(out.join("events.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["t", "kind", "data"]);
    }

    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("activation"), "{report}");

    // The resolved scenario written next to the outputs reproduces the run.
    let resolved = Scenario::load(&out.join("scenario.toml")).unwrap();
    assert_eq!(resolved, Scenario::load(Path::new(&scenario)).unwrap());

    let audit = audit_from_trace(&rows, resolved.storage.capacitance_f);
    assert!(audit.relative_error() < 0.01, "{audit:?}");
}

#[test]
fn same_seed_gives_identical_trace() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario_file(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        assert!(leaksim(&["run", &scenario, "--seed", "9", "-o", path_str(dir)]).status.success());
    }
    assert!(leaksim(&["run", &scenario, "--seed", "10", "-o", path_str(&c)]).status.success());
    for file in ["trace.csv", "events.jsonl", "report.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_ne!(
        fs::read(a.join("events.jsonl")).unwrap(),
        fs::read(c.join("events.jsonl")).unwrap()
    );
}

#[test]
fn malformed_key_exits_one_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[run]\nduration_s = 60.0\n\n[storage]\ncapacitance = 1.5\n").unwrap();
    let o = leaksim(&["run", path_str(&path), "-o", path_str(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("capacitance"), "{err}");
}

#[test]
fn invalid_values_exit_one() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[storage]\ncapacitance_f = -1.0\n").unwrap();
    let o = leaksim(&["run", path_str(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(leaksim(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(leaksim(&["montecarlo", "-n", "0"]).status.code(), Some(1));
}

#[test]
fn io_failures_exit_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("missing.toml");
    let o = leaksim(&["run", path_str(&missing)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    // An output "directory" that is actually a file cannot be written.
    let scenario = short_scenario_file(tmp.path());
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = leaksim(&["run", &scenario, "-o", path_str(&blocker)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario_file(tmp.path());
    let out = tmp.path().join("sweep");
    let o = leaksim(&[
        "sweep", &scenario, "--param", "capacitance_f", "--values", "0.4,0.5", "-o", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for v in ["0.4", "0.5"] {
        assert!(out.join(format!("capacitance_f={v}")).join("trace.csv").is_file());
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let comparison = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(comparison.lines().next().unwrap(), format!("value,{TRACE_HEADER}"));
    assert_eq!(comparison.lines().count(), 1 + 2 * 901);

    // The 0.5 F entry is the unmodified scenario, so it matches a plain run.
    let single = tmp.path().join("single");
    assert!(leaksim(&["run", &scenario, "-o", path_str(&single)]).status.success());
    assert_eq!(
        fs::read(out.join("capacitance_f=0.5").join("trace.csv")).unwrap(),
        fs::read(single.join("trace.csv")).unwrap()
    );

    let o = leaksim(&["sweep", &scenario, "--param", "flux", "--values", "1", "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("flux"));
}

#[test]
fn montecarlo_aggregate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario_file(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = leaksim(&["montecarlo", &scenario, "-n", "4", "--master-seed", "77", "-o", path_str(dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let agg = fs::read(a.join("aggregate.json")).unwrap();
    assert_eq!(agg, fs::read(b.join("aggregate.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&agg).unwrap();
    assert_eq!(json["n"], 4);
    assert_eq!(json["master_seed"], 77);
    let runs = fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
}

#[test]
fn montecarlo_single_run_matches_run() {
    let tmp = TempDir::new().unwrap();
    let scenario = short_scenario_file(tmp.path());
    let mc = tmp.path().join("mc");
    let o = leaksim(&[
        "montecarlo", &scenario, "-n", "1", "--jitter", "0", "--v-jitter", "0", "-o", path_str(&mc),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let single = tmp.path().join("single");
    assert!(leaksim(&["run", &scenario, "-o", path_str(&single)]).status.success());

    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(mc.join("aggregate.json")).unwrap()).unwrap();
    let events = parse_events_jsonl(&fs::read_to_string(single.join("events.jsonl")).unwrap()).unwrap();
    let summary = leaksim::engine::summarize_events(&events);
    let mean = json["activation_time_min"]["mean"].as_f64().unwrap();
    assert!((mean - summary.activation_time_min().unwrap()).abs() < 1e-6);
    assert_eq!(json["activation_time_min"]["sd"].as_f64(), Some(0.0));
    assert_eq!(json["delivered"]["mean"].as_f64(), Some(summary.delivered as f64));
}

#[test]
fn size_cap_prints_required_capacitance() {
    for (args, expect) in [
        (["3.49", "0.75", "4.87", "3.25"], 0.71),
        (["6.58", "1.0", "4.87", "3.25"], 1.00),
        (["3.49", "0.75", "4.87", "3.67"], 0.91),
    ] {
        let o = leaksim(&[
            "size-cap", "--e-load-j", args[0], "--eff", args[1], "--v-on", args[2], "--v-off", args[3],
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains("usable energy per farad"), "{text}");
        let farads: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("required capacitance: "))
            .and_then(|v| v.trim_end_matches(" F").parse().ok())
            .expect("capacitance line");
        assert!((farads - expect).abs() <= 0.005, "{farads} vs {expect}");
    }
    let o = leaksim(&["size-cap", "--e-load-j", "3.49", "--eff", "0.75", "--v-on", "3.0", "--v-off", "4.0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_example_scenario_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml");
    assert_eq!(Scenario::load(&path).unwrap(), Scenario::default());
}
