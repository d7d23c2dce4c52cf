//! File formats: trace CSV, JSON-lines event log, text report, and the
//! sweep / Monte Carlo tables.
//!
//! Every float is written with 9 significant digits so that outputs are
//! byte-comparable across platforms.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::engine::{EnergyAudit, Event, McResult, SimResult, TraceRow};
use crate::error::{Result, SimError};
use crate::modem::{self, PhaseKind, V_NOMINAL};
use crate::node::NodePhase;
use crate::power_path::{gate_thresholds, GatePhase};
use crate::scenario::Scenario;

pub const TRACE_HEADER: &str = "t_s,v_cap_v,i_harvest_a,i_load_a,gate,node_phase";

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn fmt_f64(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Serialize with every float rounded to 9 significant digits.
pub fn to_json_rounded<T: serde::Serialize>(value: &T, pretty: bool) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| SimError::invalid(e.to_string()))?;
    round_json(&mut v);
    let text = if pretty {
        serde_json::to_string_pretty(&v)
    } else {
        serde_json::to_string(&v)
    };
    text.map_err(|e| SimError::invalid(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| SimError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

fn trace_line(out: &mut String, r: &TraceRow) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        fmt_f64(r.t_s),
        fmt_f64(r.v_cap_v),
        fmt_f64(r.i_harvest_a),
        fmt_f64(r.i_load_a),
        r.gate.as_str(),
        r.node_phase.as_str()
    );
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        trace_line(&mut out, r);
    }
    out
}

fn parse_gate(s: &str) -> Option<GatePhase> {
    match s {
        "charging" => Some(GatePhase::Charging),
        "active" => Some(GatePhase::Active),
        _ => None,
    }
}

fn parse_phase(s: &str) -> Option<NodePhase> {
    [
        NodePhase::Off,
        NodePhase::Booting,
        NodePhase::Attaching,
        NodePhase::Transmitting,
        NodePhase::Idle,
        NodePhase::Brownout,
    ]
    .into_iter()
    .find(|p| p.as_str() == s)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => {
            return Err(SimError::Parse {
                line: 1,
                message: "missing trace header".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let bad = |m: &str| SimError::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(TraceRow {
                t_s: num(f[0])?,
                v_cap_v: num(f[1])?,
                i_harvest_a: num(f[2])?,
                i_load_a: num(f[3])?,
                gate: parse_gate(f[4]).ok_or_else(|| bad("bad gate phase"))?,
                node_phase: parse_phase(f[5]).ok_or_else(|| bad("bad node phase"))?,
            })
        })
        .collect()
}

/// Energy audit using only the sampled trace. Load here includes the
/// divider's quiescent draw.
pub fn audit_from_trace(rows: &[TraceRow], capacitance_f: f64) -> EnergyAudit {
    let mut a = EnergyAudit::default();
    for w in rows.windows(2) {
        let span = w[1].t_s - w[0].t_s;
        let v_mid = 0.5 * (w[0].v_cap_v + w[1].v_cap_v);
        a.rail_in_j += v_mid * w[1].i_harvest_a * span;
        a.load_j += v_mid * w[1].i_load_a * span;
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        a.cap_delta_j = 0.5 * capacitance_f * (last.v_cap_v.powi(2) - first.v_cap_v.powi(2));
    }
    a.residual_j = a.rail_in_j - a.cap_delta_j - a.load_j;
    a
}

/// Time of the first sample with the gate closed.
pub fn activation_from_trace(rows: &[TraceRow]) -> Option<f64> {
    rows.iter().find(|r| r.gate == GatePhase::Active).map(|r| r.t_s)
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

pub fn events_jsonl(events: &[Event]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        out.push_str(&to_json_rounded(e, false)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_events_jsonl(text: &str) -> Result<Vec<Event>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SimError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// One line of the reproduction table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub quantity: &'static str,
    pub reference: String,
    pub accepted: String,
    pub simulated: String,
    pub pass: bool,
}

pub const ACTIVATION_BAND_MIN: (f64, f64) = (19.0, 27.0);
pub const FIRST_CYCLE_BAND: (u64, u64) = (6, 10);
pub const GATE_OPEN_TOL_V: f64 = 0.05;
pub const AUDIT_TOL: f64 = 0.01;

/// Comparison of a run against the bench reference numbers. Each flag can
/// be recomputed from the trace and event log alone.
pub fn reproduction_checks(s: &Scenario, r: &SimResult) -> Vec<Check> {
    let e = &r.summary.events;
    let v_off = gate_thresholds(&s.gate.params()).map(|t| t.1).unwrap_or(f64::NAN);
    let mut checks = Vec::new();

    let act = e.activation_time_min();
    checks.push(Check {
        quantity: "activation time [min]",
        reference: "23".into(),
        accepted: format!("[{}, {}]", ACTIVATION_BAND_MIN.0, ACTIVATION_BAND_MIN.1),
        simulated: act.map_or("none".into(), |a| format!("{a:.2}")),
        pass: act.is_some_and(|a| (ACTIVATION_BAND_MIN.0..=ACTIVATION_BAND_MIN.1).contains(&a)),
    });

    let first = e.first_cycle_beacons();
    checks.push(Check {
        quantity: "first-cycle beacons",
        reference: "8".into(),
        accepted: format!("[{}, {}]", FIRST_CYCLE_BAND.0, FIRST_CYCLE_BAND.1),
        simulated: first.map_or("none".into(), |b| b.to_string()),
        pass: first.is_some_and(|b| (FIRST_CYCLE_BAND.0..=FIRST_CYCLE_BAND.1).contains(&b)),
    });

    let worst = e
        .gate_open_v
        .iter()
        .map(|v| v - v_off)
        .max_by(|a, b| a.abs().total_cmp(&b.abs()));
    checks.push(Check {
        quantity: "gate-open voltage [V]",
        reference: format!("{v_off:.2}"),
        accepted: format!("+/- {GATE_OPEN_TOL_V}"),
        simulated: worst.map_or("none".into(), |d| format!("{:.3}", v_off + d)),
        pass: worst.is_some_and(|d| d.abs() <= GATE_OPEN_TOL_V),
    });

    checks.push(Check {
        quantity: "brownouts in powered phases",
        reference: "0".into(),
        accepted: "0".into(),
        simulated: e.brownouts.to_string(),
        pass: e.brownouts == 0,
    });

    let audit = audit_from_trace(&r.trace, s.storage.capacitance_f);
    let rel = if audit.rail_in_j > 0.0 {
        audit.residual_j.abs() / audit.rail_in_j
    } else {
        0.0
    };
    checks.push(Check {
        quantity: "energy audit residual",
        reference: "0".into(),
        accepted: format!("< {}%", AUDIT_TOL * 100.0),
        simulated: format!("{:.4}%", rel * 100.0),
        pass: rel < AUDIT_TOL,
    });
    checks
}

/// Synthesized phase energies at the nominal supply against the profiled values.
pub fn phase_energy_lines(s: &Scenario) -> Result<Vec<(PhaseKind, f64, f64)>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s.run.seed);
    modem::phase_table(&s.modem)
        .iter()
        .map(|p| {
            let trace = modem::synthesize_current(p, s.node.trace_dt_s, &mut rng)?;
            let e = modem::energy_of_trace(&trace, V_NOMINAL, s.node.trace_dt_s)?;
            Ok((p.kind, p.energy_at_nominal_j, e))
        })
        .collect()
}

pub fn report_text(s: &Scenario, r: &SimResult) -> Result<String> {
    let e = &r.summary.events;
    let a = &r.summary.energy;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "leak beacon simulation report");
    let _ = writeln!(w, "=============================");
    let _ = writeln!(
        w,
        "scenario: depth {} mm, C {} F, gate {}, psm {}, band {}, seed {}",
        s.water.depth_mm,
        s.storage.capacitance_f,
        s.gate.name(),
        s.modem.psm_enabled,
        s.modem.band_mode.as_str(),
        s.run.seed
    );
    let _ = writeln!(w, "simulated {} s at dt {} s", s.run.duration_s, s.run.dt_s);
    let _ = writeln!(w);
    let _ = writeln!(w, "summary");
    let _ = writeln!(w, "-------");
    let _ = writeln!(
        w,
        "activation time      : {}",
        e.activation_time_s
            .map_or("never".into(), |t| format!("{} s ({:.2} min)", fmt_f64(t), t / 60.0))
    );
    let _ = writeln!(w, "cycles               : {}", e.cycles);
    let _ = writeln!(w, "beacons per cycle    : {:?}", e.beacons_per_cycle);
    let _ = writeln!(w, "delivered / lost     : {} / {}", e.delivered, e.undelivered);
    let _ = writeln!(w, "brownouts            : {}", e.brownouts);
    let _ = writeln!(
        w,
        "mean beacon droop    : {}",
        e.mean_beacon_droop_v.map_or("n/a".into(), |d| format!("{} V", fmt_f64(d)))
    );
    let _ = writeln!(
        w,
        "link latency range   : {}",
        e.latency_range_s
            .map_or("n/a".into(), |[lo, hi]| format!("{} .. {} s", fmt_f64(lo), fmt_f64(hi)))
    );
    let _ = writeln!(w, "warnings             : {}", e.warnings);
    let _ = writeln!(w, "final / peak v_cap   : {} / {} V", fmt_f64(r.summary.v_cap_final_v), fmt_f64(r.summary.v_cap_max_v));
    let _ = writeln!(w);
    let _ = writeln!(w, "energy audit [J]");
    let _ = writeln!(w, "----------------");
    let _ = writeln!(w, "harvester output     : {}", fmt_f64(a.harvester_out_j));
    let _ = writeln!(w, "into rail            : {}", fmt_f64(a.rail_in_j));
    let _ = writeln!(w, "modem load           : {}", fmt_f64(a.load_j));
    let _ = writeln!(w, "divider quiescent    : {}", fmt_f64(a.quiescent_j));
    let _ = writeln!(w, "capacitor change     : {}", fmt_f64(a.cap_delta_j));
    let _ = writeln!(w, "residual             : {} ({:.2e} of input)", fmt_f64(a.residual_j), a.relative_error());
    let _ = writeln!(w);
    let _ = writeln!(w, "modem phase energy at {V_NOMINAL} V [J]");
    let _ = writeln!(w, "-------------------------------");
    for (kind, reference, sim) in phase_energy_lines(s)? {
        let _ = writeln!(
            w,
            "{:<15} reference {:<6} synthesized {:<10} ({:+.2}%)",
            kind.as_str(),
            reference,
            fmt_f64(sim),
            (sim / reference - 1.0) * 100.0
        );
    }
    let _ = writeln!(w);
    let _ = writeln!(w, "reproduction table");
    let _ = writeln!(w, "------------------");
    let _ = writeln!(w, "{:<30} {:>9} {:>14} {:>11}  result", "quantity", "reference", "accepted", "simulated");
    for c in reproduction_checks(s, r) {
        let _ = writeln!(
            w,
            "{:<30} {:>9} {:>14} {:>11}  {}",
            c.quantity,
            c.reference,
            c.accepted,
            c.simulated,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(out)
}

/// Write trace.csv, events.jsonl, report.txt and the resolved scenario.
pub fn write_run(dir: &Path, s: &Scenario, r: &SimResult) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("trace.csv"), &trace_csv(&r.trace))?;
    write_file(&dir.join("events.jsonl"), &events_jsonl(&r.events)?)?;
    write_file(&dir.join("report.txt"), &report_text(s, r)?)?;
    write_file(&dir.join("scenario.toml"), &s.to_toml_string()?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep and Monte Carlo tables
// ---------------------------------------------------------------------------

pub const SWEEP_SUMMARY_HEADER: &str =
    "value,activation_time_s,cycles,first_cycle_beacons,delivered,undelivered,brownouts,mean_beacon_droop_v";

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn sweep_summary_csv(values: &[String], results: &[SimResult]) -> String {
    let mut out = String::from(SWEEP_SUMMARY_HEADER);
    out.push('\n');
    for (v, r) in values.iter().zip(results) {
        let e = &r.summary.events;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            v,
            opt(e.activation_time_s),
            e.cycles,
            e.first_cycle_beacons().map(|b| b.to_string()).unwrap_or_default(),
            e.delivered,
            e.undelivered,
            e.brownouts,
            opt(e.mean_beacon_droop_v)
        );
    }
    out
}

/// All traces in one long-format table, keyed by the swept value.
pub fn sweep_comparison_csv(values: &[String], results: &[SimResult]) -> String {
    let mut out = format!("value,{TRACE_HEADER}\n");
    for (v, r) in values.iter().zip(results) {
        for row in &r.trace {
            out.push_str(v);
            out.push(',');
            trace_line(&mut out, row);
        }
    }
    out
}

pub fn write_sweep(dir: &Path, param: &str, values: &[String], scenarios: &[Scenario], results: &[SimResult]) -> Result<()> {
    ensure_dir(dir)?;
    for ((v, s), r) in values.iter().zip(scenarios).zip(results) {
        write_run(&dir.join(format!("{param}={v}")), s, r)?;
    }
    write_file(&dir.join("summary.csv"), &sweep_summary_csv(values, results))?;
    write_file(&dir.join("comparison.csv"), &sweep_comparison_csv(values, results))?;
    Ok(())
}

pub const MC_RUNS_HEADER: &str =
    "index,seed,i_peak_a,i_plateau_a,v_peak_v,v_plateau_v,activation_time_s,cycles,first_cycle_beacons,delivered,undelivered,brownouts";

pub fn mc_runs_csv(mc: &McResult) -> String {
    let mut out = String::from(MC_RUNS_HEADER);
    out.push('\n');
    for r in &mc.runs {
        let e = &r.summary.events;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            fmt_f64(r.i_peak_a),
            fmt_f64(r.i_plateau_a),
            fmt_f64(r.v_peak_v),
            fmt_f64(r.v_plateau_v),
            opt(e.activation_time_s),
            e.cycles,
            e.first_cycle_beacons().map(|b| b.to_string()).unwrap_or_default(),
            e.delivered,
            e.undelivered,
            e.brownouts
        );
    }
    out
}

pub fn write_monte_carlo(dir: &Path, mc: &McResult) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("runs.csv"), &mc_runs_csv(mc))?;
    let mut json = to_json_rounded(&mc.stats, true)?;
    json.push('\n');
    write_file(&dir.join("aggregate.json"), &json)?;
    Ok(())
}
