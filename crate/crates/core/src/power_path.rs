//! Boost converter, supercapacitor buffer and comparator load gate.
//!
//! Topology: harvester -> boost -> capacitor rail -> gate -> modem. The
//! boost converter loads the cell down to its input regulation voltage
//! (bounded by an input current limit) and pushes the converted power onto
//! the capacitor rail. The gate is a shunt-reference comparator with a
//! three-resistor divider providing hysteresis.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::harvester::Thevenin;

// ---------------------------------------------------------------------------
// Boost converter
// ---------------------------------------------------------------------------

/// One point of the efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyPoint {
    pub i_out_a: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    /// Output regulation target; the capacitor never charges past it.
    pub v_out_set_v: f64,
    /// Start-up / operating cutoff on the input side.
    pub v_in_min_v: f64,
    /// Input voltage the converter loads the source down to.
    pub v_in_reg_v: f64,
    /// Input current limit.
    pub i_in_max_a: f64,
    pub efficiency_curve: Vec<EfficiencyPoint>,
}

impl Default for BoostParams {
    fn default() -> Self {
        let curve = [(0.010, 0.82), (0.050, 0.80), (0.150, 0.76), (0.250, 0.73)];
        BoostParams {
            v_out_set_v: 5.0,
            v_in_min_v: 0.9,
            v_in_reg_v: 1.4,
            i_in_max_a: 0.014,
            efficiency_curve: curve
                .iter()
                .map(|&(i_out_a, efficiency)| EfficiencyPoint { i_out_a, efficiency })
                .collect(),
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_in_min_v > 0.0 && self.v_out_set_v > self.v_in_min_v) {
            return Err(SimError::invalid("boost: need v_out_set_v > v_in_min_v > 0"));
        }
        if !(self.v_in_reg_v > 0.0 && self.v_in_reg_v < self.v_out_set_v) {
            return Err(SimError::invalid("boost: v_in_reg_v must lie in (0, v_out_set_v)"));
        }
        if !(self.i_in_max_a > 0.0) {
            return Err(SimError::invalid("boost: i_in_max_a must be > 0"));
        }
        if self.efficiency_curve.is_empty() {
            return Err(SimError::invalid("boost: efficiency curve is empty"));
        }
        for pair in self.efficiency_curve.windows(2) {
            if !(pair[1].i_out_a > pair[0].i_out_a) {
                return Err(SimError::invalid("boost: efficiency anchors must have strictly increasing current"));
            }
        }
        for pt in &self.efficiency_curve {
            if !(pt.efficiency > 0.0 && pt.efficiency <= 1.0) || !(pt.i_out_a >= 0.0) {
                return Err(SimError::invalid("boost: efficiency must lie in (0, 1] at non-negative current"));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear efficiency through the anchors, held flat outside them.
pub fn efficiency_at(b: &BoostParams, i_out: f64) -> Result<f64> {
    if !(i_out >= 0.0) {
        return Err(SimError::invalid(format!("output current must be >= 0, got {i_out}")));
    }
    Ok(interpolate(&b.efficiency_curve, i_out))
}

fn interpolate(curve: &[EfficiencyPoint], i: f64) -> f64 {
    let first = curve[0];
    let last = curve[curve.len() - 1];
    if i <= first.i_out_a {
        return first.efficiency;
    }
    if i >= last.i_out_a {
        return last.efficiency;
    }
    let k = curve.partition_point(|p| p.i_out_a <= i);
    let (a, b) = (curve[k - 1], curve[k]);
    let w = (i - a.i_out_a) / (b.i_out_a - a.i_out_a);
    a.efficiency + w * (b.efficiency - a.efficiency)
}

/// Output current from power balance `v_out i_out = eta v_in i_in`.
pub fn convert(v_in: f64, i_in: f64, v_out: f64, efficiency: f64) -> f64 {
    efficiency * v_in * i_in / v_out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoostTransfer {
    pub i_out: f64,
    pub running: bool,
    pub efficiency: f64,
    pub iterations: u32,
    pub converged: bool,
}

pub const MAX_FIXED_POINT_ITERS: u32 = 20;
/// Relative change in output current at which the iteration stops.
const FIXED_POINT_TOL: f64 = 1e-6;

/// Convert `i_in` drawn at `v_in` into current delivered at `v_out`.
///
/// Efficiency depends on the output current, so the two are solved by
/// fixed-point iteration. The converter is off below its input cutoff.
pub fn boost_transfer(b: &BoostParams, v_in: f64, i_in: f64, v_out: f64) -> BoostTransfer {
    if v_in < b.v_in_min_v || i_in <= 0.0 || v_out <= 0.0 {
        return BoostTransfer {
            running: v_in >= b.v_in_min_v,
            converged: true,
            ..Default::default()
        };
    }
    let mut eta = interpolate(&b.efficiency_curve, 0.0);
    let mut i_out = convert(v_in, i_in, v_out, eta);
    for iter in 1..=MAX_FIXED_POINT_ITERS {
        let next_eta = interpolate(&b.efficiency_curve, i_out);
        let next_i_out = convert(v_in, i_in, v_out, next_eta);
        let done = (next_i_out - i_out).abs() <= FIXED_POINT_TOL * i_out.abs().max(1e-9);
        eta = next_eta;
        i_out = next_i_out;
        if done {
            return BoostTransfer {
                i_out,
                running: true,
                efficiency: eta,
                iterations: iter,
                converged: true,
            };
        }
    }
    BoostTransfer {
        i_out,
        running: true,
        efficiency: eta,
        iterations: MAX_FIXED_POINT_ITERS,
        converged: false,
    }
}

/// Joint operating point of source and converter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatingPoint {
    pub v_in: f64,
    pub i_in: f64,
    pub i_out: f64,
    pub efficiency: f64,
    pub running: bool,
    pub converged: bool,
}

impl OperatingPoint {
    pub fn input_power(&self) -> f64 {
        self.v_in * self.i_in
    }
}

/// Solve the source/converter operating point for a rail at `v_cap`.
///
/// The converter draws as much current as keeps its input at the
/// regulation voltage, up to its current limit. At the regulation ceiling
/// it stops switching.
pub fn operating_point(b: &BoostParams, source: Option<Thevenin>, v_cap: f64) -> OperatingPoint {
    let Some(src) = source else {
        return OperatingPoint { converged: true, ..Default::default() };
    };
    let v_floor = b.v_in_reg_v.max(b.v_in_min_v);
    if src.v_oc < b.v_in_min_v {
        return OperatingPoint {
            v_in: src.v_oc,
            converged: true,
            ..Default::default()
        };
    }
    if v_cap >= b.v_out_set_v {
        return OperatingPoint {
            v_in: src.v_oc,
            running: true,
            converged: true,
            ..Default::default()
        };
    }
    let i_in = ((src.v_oc - v_floor) / src.r_int).clamp(0.0, b.i_in_max_a);
    let v_in = src.terminal_voltage(i_in);
    let t = boost_transfer(b, v_in, i_in, v_cap.max(v_in));
    OperatingPoint {
        v_in,
        i_in,
        i_out: t.i_out,
        efficiency: t.efficiency,
        running: t.running,
        converged: t.converged,
    }
}

// ---------------------------------------------------------------------------
// Supercapacitor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supercapacitor {
    pub capacitance: f64,
    pub v: f64,
}

impl Supercapacitor {
    pub fn energy(&self) -> f64 {
        0.5 * self.capacitance * self.v * self.v
    }
}

/// Ideal capacitor update `dv = i dt / C`, clamped to `[0, ceiling]`.
pub fn cap_integrate(c: Supercapacitor, i_net: f64, dt: f64, ceiling: f64) -> Supercapacitor {
    let v = (c.v + i_net * dt / c.capacitance).clamp(0.0, ceiling);
    Supercapacitor { v, ..c }
}

/// Energy released between the two gate thresholds.
pub fn usable_energy(capacitance: f64, v_on: f64, v_off: f64) -> Result<f64> {
    if !(v_on >= v_off && v_off >= 0.0) {
        return Err(SimError::invalid(format!("need v_on >= v_off >= 0, got {v_on} / {v_off}")));
    }
    if !(capacitance > 0.0) {
        return Err(SimError::invalid("capacitance must be > 0"));
    }
    Ok(0.5 * capacitance * (v_on * v_on - v_off * v_off))
}

/// Capacitance whose threshold window covers `e_load` after converter
/// losses: `C = (E / eta) / (0.5 (v_on^2 - v_off^2))`.
pub fn required_capacitance(e_load: f64, boost_eff: f64, v_on: f64, v_off: f64) -> Result<f64> {
    if !(e_load > 0.0) {
        return Err(SimError::invalid("load energy must be > 0"));
    }
    if !(boost_eff > 0.0 && boost_eff <= 1.0) {
        return Err(SimError::invalid("efficiency must lie in (0, 1]"));
    }
    if !(v_on > v_off && v_off >= 0.0) {
        return Err(SimError::invalid("need v_on > v_off >= 0"));
    }
    Ok((e_load / boost_eff) / (0.5 * (v_on * v_on - v_off * v_off)))
}

// ---------------------------------------------------------------------------
// Comparator gate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateParams {
    pub r1_ohm: f64,
    pub r2_ohm: f64,
    pub r4_ohm: f64,
    pub v_ref_v: f64,
    /// Divider and reference bias drawn whenever the rail is above zero.
    pub i_quiescent_a: f64,
}

pub const DEFAULT_V_REF: f64 = 1.24;
pub const DEFAULT_I_QUIESCENT: f64 = 40e-6;
pub const V_ON: f64 = 4.87;
pub const V_OFF_IDEAL: f64 = 3.25;
pub const V_OFF_MEASURED: f64 = 3.67;

fn parallel(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Turn-on and turn-off voltages of the divider network.
pub fn gate_thresholds(g: &GateParams) -> Result<(f64, f64)> {
    if !(g.r1_ohm > 0.0 && g.r2_ohm > 0.0 && g.r4_ohm > 0.0) {
        return Err(SimError::invalid("gate resistances must be > 0"));
    }
    if !(g.v_ref_v > 0.0) {
        return Err(SimError::invalid("gate reference voltage must be > 0"));
    }
    let v_on = g.v_ref_v * (1.0 + g.r1_ohm / parallel(g.r2_ohm, g.r4_ohm));
    let v_off = g.v_ref_v * (1.0 + parallel(g.r1_ohm, g.r4_ohm) / g.r2_ohm);
    if !(v_on > v_off) {
        return Err(SimError::DegenerateGate { v_on, v_off });
    }
    Ok((v_on, v_off))
}

/// Resistor values (for a chosen `r1`) that place the thresholds at
/// `v_on` / `v_off`. Inverse of [`gate_thresholds`].
pub fn solve_network(v_on: f64, v_off: f64, v_ref: f64, r1: f64) -> Result<GateParams> {
    let a = v_on / v_ref - 1.0;
    let b = v_off / v_ref - 1.0;
    if !(a > b && b > 0.0) || !(r1 > 0.0) {
        return Err(SimError::invalid(format!(
            "cannot realize thresholds {v_on} / {v_off} V with v_ref {v_ref} V"
        )));
    }
    Ok(GateParams {
        r1_ohm: r1,
        r2_ohm: r1 * (b + 1.0) / (b * (a + 1.0)),
        r4_ohm: r1 * (b + 1.0) / (a - b),
        v_ref_v: v_ref,
        i_quiescent_a: DEFAULT_I_QUIESCENT,
    })
}

/// How the gate thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum GateMode {
    /// Nominal component values: 4.87 V / 3.25 V.
    Ideal,
    /// Bench-observed cutoff: 4.87 V / 3.67 V.
    Measured,
    Explicit(GateParams),
}

impl GateMode {
    pub fn params(&self) -> GateParams {
        match *self {
            GateMode::Ideal => solve_network(V_ON, V_OFF_IDEAL, DEFAULT_V_REF, 100e3).expect("valid preset"),
            GateMode::Measured => {
                solve_network(V_ON, V_OFF_MEASURED, DEFAULT_V_REF, 100e3).expect("valid preset")
            }
            GateMode::Explicit(g) => g,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateMode::Ideal => "ideal",
            GateMode::Measured => "measured",
            GateMode::Explicit(_) => "explicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePhase {
    Charging,
    Active,
}

impl GatePhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            GatePhase::Charging => "charging",
            GatePhase::Active => "active",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateState {
    pub phase: GatePhase,
    pub v_on: f64,
    pub v_off: f64,
}

impl GateState {
    pub fn new(g: &GateParams) -> Result<Self> {
        let (v_on, v_off) = gate_thresholds(g)?;
        Ok(GateState {
            phase: GatePhase::Charging,
            v_on,
            v_off,
        })
    }

    pub fn closed(&self) -> bool {
        self.phase == GatePhase::Active
    }
}

/// Hysteretic comparator update.
pub fn gate_step(s: GateState, v_cap: f64) -> GateState {
    let phase = match s.phase {
        GatePhase::Charging if v_cap >= s.v_on => GatePhase::Active,
        GatePhase::Active if v_cap < s.v_off => GatePhase::Charging,
        p => p,
    };
    GateState { phase, ..s }
}
