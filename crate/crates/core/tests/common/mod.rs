//! Shared scenario generators for the integration targets.

#![allow(dead_code)]

use leaksim::modem::BandMode;
use leaksim::power_path::{GateMode, GateParams, DEFAULT_I_QUIESCENT, DEFAULT_V_REF};
use leaksim::scenario::WaterEvent;
use leaksim::Scenario;
use proptest::prelude::*;

/// Simulated seconds per short closed-loop case.
pub const SHORT_DURATION_S: (f64, f64) = (300.0, 900.0);

/// Small-capacitor scenario that activates within a few minutes.
pub fn short_scenario(capacitance_f: f64, duration_s: f64, seed: u64) -> Scenario {
    let mut s = Scenario::default();
    s.storage.capacitance_f = capacitance_f;
    s.run.duration_s = duration_s;
    s.run.seed = seed;
    s
}

pub fn arb_gate_mode() -> impl Strategy<Value = GateMode> {
    prop_oneof![Just(GateMode::Measured), Just(GateMode::Ideal)]
}

/// Short randomized closed-loop scenarios: small capacitors, varied depth,
/// gate preset, modem options, step size and an optional dry-out.
pub fn arb_short_scenario() -> impl Strategy<Value = Scenario> {
    (
        (0..=i64::MAX as u64, 0.15f64..0.6, 0.3f64..2.0, arb_gate_mode()),
        (any::<bool>(), any::<bool>(), 30.0f64..180.0),
        (prop_oneof![Just(0.01), Just(0.02), Just(0.05)], SHORT_DURATION_S.0..SHORT_DURATION_S.1),
        (proptest::option::of(0.3f64..1.0), 0.0f64..3.0),
    )
        .prop_map(|((seed, c, depth, gate), (psm, ntn, idle), (dt, duration), (dry_frac, v0))| {
            let mut s = short_scenario(c, duration.round(), seed);
            s.water.depth_mm = depth;
            s.gate = gate;
            s.modem.psm_enabled = psm;
            s.modem.band_mode = if ntn { BandMode::NtnBand2 } else { BandMode::Terrestrial };
            s.modem.idle_interval_s = idle;
            s.run.dt_s = dt;
            s.storage.initial_v_cap_v = v0;
            if let Some(f) = dry_frac {
                s.water.schedule.push(WaterEvent {
                    t_s: (f * s.run.duration_s).round(),
                    present: false,
                });
            }
            s
        })
}

/// Scenarios that charge from empty and activate well inside the run, for
/// step-size convergence checks.
pub fn arb_activating_scenario() -> impl Strategy<Value = Scenario> {
    (0..=i64::MAX as u64, 0.15f64..0.5, 0.5f64..2.0, arb_gate_mode(), prop_oneof![Just(0.01), Just(0.02)])
        .prop_map(|(seed, c, depth, gate, dt)| {
            let mut s = short_scenario(c, 600.0, seed);
            s.water.depth_mm = depth;
            s.gate = gate;
            s.run.dt_s = dt;
            s.run.trace_interval_s = 0.1;
            s
        })
}

/// Resistor networks whose thresholds stay inside a sane rail range.
pub fn arb_gate_params() -> impl Strategy<Value = GateParams> {
    (10e3f64..1e6, 10e3f64..1e6, 10e3f64..1e6, 0.6f64..2.5).prop_map(|(r1, r2, r4, v_ref)| GateParams {
        r1_ohm: r1,
        r2_ohm: r2,
        r4_ohm: r4,
        v_ref_v: v_ref,
        i_quiescent_a: DEFAULT_I_QUIESCENT,
    })
}

/// Arbitrary valid scenarios, including explicit gate networks and
/// non-default sections, for format round trips.
pub fn arb_any_scenario() -> impl Strategy<Value = Scenario> {
    (
        arb_short_scenario(),
        proptest::option::of((20e3f64..400e3, 1.0f64..2.0)),
        (0.0f64..0.5, 0.05f64..1.0, 0.001f64..0.5),
        ("[a-z][a-z0-9-]{0,15}", 1.0f64..3.0, 0.0f64..20.0),
    )
        .prop_map(|(mut s, explicit, (esr, ratio, knee), (id, ntn_scale, boot))| {
            if let Some((r1, scale)) = explicit {
                s.gate = GateMode::Explicit(GateParams {
                    r1_ohm: r1,
                    r2_ohm: r1 * scale,
                    r4_ohm: r1 * scale * 2.2,
                    v_ref_v: DEFAULT_V_REF,
                    i_quiescent_a: DEFAULT_I_QUIESCENT,
                });
            }
            s.storage.esr_ohm = esr;
            s.harvester.sustained_current_ratio = ratio;
            s.harvester.depth_knee_mm = knee;
            s.run.device_id = id;
            s.modem.ntn_tx_scale = ntn_scale;
            s.node.boot_delay_s = boot;
            s
        })
        .prop_filter("valid scenario", |s| s.validate().is_ok())
}
