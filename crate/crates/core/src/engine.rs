//! Fixed-step closed-loop simulation: harvester -> boost -> capacitor ->
//! gate -> firmware, plus the sweep and Monte Carlo drivers built on it.

use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::harvester::{advance_water, sustained_source, HarvesterState};
use crate::modem::BandMode;
use crate::node::{BeaconPayload, BeaconRecord, Node, NodePhase, beacon_payload};
use crate::power_path::{cap_integrate, gate_step, operating_point, GateMode, GatePhase, GateState, Supercapacitor};
use crate::scenario::Scenario;

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One sample of the recorded trace. Currents are averages over the
/// interval that ends at `t_s`; the first row has zero currents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t_s: f64,
    pub v_cap_v: f64,
    /// Converter output current into the rail.
    pub i_harvest_a: f64,
    /// Modem plus divider draw from the rail.
    pub i_load_a: f64,
    pub gate: GatePhase,
    pub node_phase: NodePhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum EventBody {
    /// Firmware powered up for a new cycle.
    Activation { cycle: u64 },
    GateClose { cycle: u64, v_cap_v: f64 },
    GateOpen { cycle: u64, v_cap_v: f64 },
    Beacon { record: BeaconRecord, payload: BeaconPayload },
    Brownout { cycle: u64, during: NodePhase, v_cap_v: f64 },
    Warning { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self.body {
            EventBody::Activation { .. } => "activation",
            EventBody::GateClose { .. } => "gate_close",
            EventBody::GateOpen { .. } => "gate_open",
            EventBody::Beacon { .. } => "beacon",
            EventBody::Brownout { .. } => "brownout",
            EventBody::Warning { .. } => "warning",
        }
    }
}

/// Energy bookkeeping over a whole run, all on the capacitor rail except
/// `harvester_out_j`, which is measured at the converter input.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub harvester_out_j: f64,
    pub rail_in_j: f64,
    pub load_j: f64,
    pub quiescent_j: f64,
    pub cap_delta_j: f64,
    pub residual_j: f64,
}

impl EnergyAudit {
    /// `|residual| / rail_in`, or zero when nothing was harvested.
    pub fn relative_error(&self) -> f64 {
        if self.rail_in_j > 0.0 {
            self.residual_j.abs() / self.rail_in_j
        } else {
            0.0
        }
    }
}

/// Statistics that follow from the event log alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventSummary {
    pub activation_time_s: Option<f64>,
    pub cycles: u64,
    /// Delivered beacons in each gate cycle, in cycle order.
    pub beacons_per_cycle: Vec<u64>,
    pub delivered: u64,
    pub undelivered: u64,
    pub brownouts: u64,
    pub gate_open_v: Vec<f64>,
    /// Mean rail droop across a delivered transmission.
    pub mean_beacon_droop_v: Option<f64>,
    pub latency_range_s: Option<[f64; 2]>,
    pub warnings: u64,
}

impl EventSummary {
    pub fn first_cycle_beacons(&self) -> Option<u64> {
        self.beacons_per_cycle.first().copied()
    }

    pub fn activation_time_min(&self) -> Option<f64> {
        self.activation_time_s.map(|t| t / 60.0)
    }
}

pub fn summarize_events(events: &[Event]) -> EventSummary {
    let mut s = EventSummary::default();
    let mut droops = Vec::new();
    for e in events {
        match &e.body {
            EventBody::GateClose { .. } => {
                if s.activation_time_s.is_none() {
                    s.activation_time_s = Some(e.t);
                }
                s.cycles += 1;
                s.beacons_per_cycle.push(0);
            }
            EventBody::GateOpen { v_cap_v, .. } => s.gate_open_v.push(*v_cap_v),
            EventBody::Beacon { record, .. } => {
                if record.delivered {
                    s.delivered += 1;
                    droops.push(record.v_start - record.v_end);
                    let idx = (record.cycle_index as usize).saturating_sub(1);
                    if let Some(n) = s.beacons_per_cycle.get_mut(idx) {
                        *n += 1;
                    }
                    let l = record.latency_s;
                    s.latency_range_s = Some(match s.latency_range_s {
                        Some([lo, hi]) => [lo.min(l), hi.max(l)],
                        None => [l, l],
                    });
                } else {
                    s.undelivered += 1;
                }
            }
            EventBody::Brownout { .. } => s.brownouts += 1,
            EventBody::Warning { .. } => s.warnings += 1,
            EventBody::Activation { .. } => {}
        }
    }
    if !droops.is_empty() {
        s.mean_beacon_droop_v = Some(droops.iter().sum::<f64>() / droops.len() as f64);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(flatten)]
    pub events: EventSummary,
    pub v_cap_final_v: f64,
    pub v_cap_max_v: f64,
    pub energy: EnergyAudit,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub events: Vec<Event>,
    pub summary: Summary,
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Window {
    q_harvest: f64,
    q_load: f64,
    span: f64,
}

/// Run one scenario to completion. Deterministic for a fixed seed.
pub fn run(s: &Scenario) -> Result<SimResult> {
    s.validate()?;
    let dt = s.run.dt_s;
    let n_steps = s.n_steps();
    let stride = s.trace_stride();
    let ceiling = s.boost.v_out_set_v;
    let c = s.storage.capacitance_f;

    let mut rng = ChaCha8Rng::seed_from_u64(s.run.seed);
    let gate_params = s.gate.params();
    let mut gate = GateState::new(&gate_params)?;
    let mut cap = Supercapacitor {
        capacitance: c,
        v: s.storage.initial_v_cap_v,
    };
    let mut cell = HarvesterState::fresh(s.water.depth_mm);
    let mut node = Node::new(s.modem, s.radio, s.node, &s.run.device_id);
    node.esr_ohm = s.storage.esr_ohm;

    let mut trace = Vec::with_capacity(n_steps / stride + 1);
    trace.push(TraceRow {
        t_s: 0.0,
        v_cap_v: cap.v,
        i_harvest_a: 0.0,
        i_load_a: 0.0,
        gate: gate.phase,
        node_phase: node.phase(),
    });
    let mut events = Vec::new();
    let mut audit = EnergyAudit::default();
    let e_start = cap.energy();
    let mut v_max = cap.v;
    let mut window = Window::default();
    let mut diverging = false;
    let mut gate_cycles = 0u64;

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let water = s.water.present_at(t);

        let op = operating_point(&s.boost, sustained_source(&s.harvester, &cell), cap.v);
        if !op.converged && !diverging {
            events.push(Event {
                t,
                body: EventBody::Warning {
                    message: format!(
                        "converter operating point did not converge (v_in {:.4} V, i_in {:.4} A)",
                        op.v_in, op.i_in
                    ),
                },
            });
        }
        diverging = !op.converged;

        let step = node.step(t, gate.closed(), cap.v, dt, &mut rng)?;
        for tr in &step.transitions {
            if tr.to == NodePhase::Booting {
                events.push(Event {
                    t: tr.t,
                    body: EventBody::Activation { cycle: node.cycles() },
                });
            }
        }
        if let Some(b) = step.brownout {
            events.push(Event {
                t: b.t,
                body: EventBody::Brownout {
                    cycle: b.cycle_index,
                    during: b.during,
                    v_cap_v: cap.v,
                },
            });
        }
        if let Some(record) = step.beacon {
            let payload = beacon_payload(&s.run.device_id, record.seq, record.t_start);
            events.push(Event {
                t: record.t_end,
                body: EventBody::Beacon { record, payload },
            });
        }

        let i_load = step.charge / dt;
        let i_q = if cap.v > 0.0 { gate_params.i_quiescent_a } else { 0.0 };
        let v0 = cap.v;

        // Whatever the clamp removed comes off the harvest (at the ceiling)
        // or off the draw (at zero), so the books stay balanced.
        let i_demand = op.i_out - i_load - i_q;
        let next = cap_integrate(cap, i_demand, dt, ceiling);
        let unclamped = v0 + i_demand * dt / c;
        let clipped = i_demand - (next.v - v0) * c / dt;
        let (i_harvest, i_load, i_q) = if unclamped > ceiling {
            ((op.i_out - clipped).max(0.0), i_load, i_q)
        } else if unclamped < 0.0 {
            let excess = -clipped;
            let q_cut = excess.clamp(0.0, i_q);
            (op.i_out, (i_load - (excess - q_cut)).max(0.0), i_q - q_cut)
        } else {
            (op.i_out, i_load, i_q)
        };
        let v_mid = 0.5 * (v0 + next.v);
        let clip_ratio = if op.i_out > 0.0 { i_harvest / op.i_out } else { 0.0 };
        audit.harvester_out_j += op.input_power() * clip_ratio * dt;
        audit.rail_in_j += v_mid * i_harvest * dt;
        audit.load_j += v_mid * i_load * dt;
        audit.quiescent_j += v_mid * i_q * dt;
        cap = next;
        v_max = v_max.max(cap.v);

        let t_next = (k + 1) as f64 * dt;
        let before = gate.phase;
        gate = gate_step(gate, cap.v);
        if gate.phase != before {
            let body = match gate.phase {
                GatePhase::Active => {
                    gate_cycles += 1;
                    EventBody::GateClose {
                        cycle: gate_cycles,
                        v_cap_v: cap.v,
                    }
                }
                GatePhase::Charging => EventBody::GateOpen {
                    cycle: gate_cycles,
                    v_cap_v: cap.v,
                },
            };
            events.push(Event { t: t_next, body });
        }

        cell = advance_water(&s.harvester, &cell, dt, water);

        window.q_harvest += i_harvest * dt;
        window.q_load += (i_load + i_q) * dt;
        window.span += dt;
        if (k + 1) % stride == 0 {
            trace.push(TraceRow {
                t_s: t_next,
                v_cap_v: cap.v,
                i_harvest_a: window.q_harvest / window.span,
                i_load_a: window.q_load / window.span,
                gate: gate.phase,
                node_phase: node.phase(),
            });
            window = Window::default();
        }
    }

    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    audit.cap_delta_j = cap.energy() - e_start;
    audit.residual_j = audit.rail_in_j - audit.cap_delta_j - audit.load_j - audit.quiescent_j;
    let summary = Summary {
        events: summarize_events(&events),
        v_cap_final_v: cap.v,
        v_cap_max_v: v_max,
        energy: audit,
    };
    Ok(SimResult { trace, events, summary })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    CapacitanceF,
    DepthMm,
    IdleIntervalS,
    PsmEnabled,
    BandMode,
    GateMode,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::CapacitanceF,
        SweepParam::DepthMm,
        SweepParam::IdleIntervalS,
        SweepParam::PsmEnabled,
        SweepParam::BandMode,
        SweepParam::GateMode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::CapacitanceF => "capacitance_f",
            SweepParam::DepthMm => "depth_mm",
            SweepParam::IdleIntervalS => "idle_interval_s",
            SweepParam::PsmEnabled => "psm_enabled",
            SweepParam::BandMode => "band_mode",
            SweepParam::GateMode => "gate_mode",
        }
    }

    /// Copy of `s` with this parameter set to `value`.
    pub fn apply(&self, s: &Scenario, value: &str) -> Result<Scenario> {
        let bad = || SimError::invalid(format!("bad value `{value}` for {}", self.as_str()));
        let number = || f64::from_str(value.trim()).map_err(|_| bad());
        let mut out = s.clone();
        match self {
            SweepParam::CapacitanceF => out.storage.capacitance_f = number()?,
            SweepParam::DepthMm => out.water.depth_mm = number()?,
            SweepParam::IdleIntervalS => out.modem.idle_interval_s = number()?,
            SweepParam::PsmEnabled => out.modem.psm_enabled = bool::from_str(value.trim()).map_err(|_| bad())?,
            SweepParam::BandMode => {
                out.modem.band_mode = match value.trim() {
                    "terrestrial" => BandMode::Terrestrial,
                    "ntn_band2" => BandMode::NtnBand2,
                    _ => return Err(bad()),
                }
            }
            SweepParam::GateMode => {
                out.gate = match value.trim() {
                    "ideal" => GateMode::Ideal,
                    "measured" => GateMode::Measured,
                    _ => return Err(bad()),
                }
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| SimError::UnknownParameter(s.to_string()))
    }
}

/// One run per value, all with the scenario's seed, in value order.
pub fn sweep(s: &Scenario, param: &str, values: &[String]) -> Result<Vec<SimResult>> {
    let p = SweepParam::from_str(param)?;
    if values.is_empty() {
        return Err(SimError::invalid("sweep needs at least one value"));
    }
    let scenarios = values.iter().map(|v| p.apply(s, v)).collect::<Result<Vec<_>>>()?;
    scenarios.par_iter().map(run).collect()
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// Relative half-widths of the uniform perturbations on the harvester's
/// OCV and SCC endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub i_peak_frac: f64,
    pub i_plateau_frac: f64,
    pub v_peak_frac: f64,
    pub v_plateau_frac: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            i_peak_frac: 0.10,
            i_plateau_frac: 0.10,
            v_peak_frac: 0.05,
            v_plateau_frac: 0.05,
        }
    }
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        i_peak_frac: 0.0,
        i_plateau_frac: 0.0,
        v_peak_frac: 0.0,
        v_plateau_frac: 0.0,
    };

    fn validate(&self) -> Result<()> {
        for f in [self.i_peak_frac, self.i_plateau_frac, self.v_peak_frac, self.v_plateau_frac] {
            if !(0.0..1.0).contains(&f) {
                return Err(SimError::invalid(format!("jitter fraction must lie in [0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

/// Seed of Monte Carlo run `index`. Run 0 uses the master seed itself.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    if index == 0 {
        return master;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64() >> 1
}

fn jitter_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ 0x6a09_e667_f3bc_c908);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub index: u64,
    pub seed: u64,
    pub i_peak_a: f64,
    pub i_plateau_a: f64,
    pub v_peak_v: f64,
    pub v_plateau_v: f64,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// Sample statistics; the deviation is zero for a single value.
    pub fn of(xs: &[f64]) -> Option<MeanSd> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub n: usize,
    pub master_seed: u64,
    pub jitter: Jitter,
    pub activated: usize,
    pub activation_time_min: Option<MeanSd>,
    pub first_cycle_beacons: Option<MeanSd>,
    pub beacons_per_cycle: Option<MeanSd>,
    pub delivered: Option<MeanSd>,
    pub brownouts: Option<MeanSd>,
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub runs: Vec<McRun>,
    pub stats: McStats,
}

/// `n` independent runs with perturbed harvester endpoints and per-run
/// seeds, executed in parallel and merged by index.
pub fn run_monte_carlo(s: &Scenario, n: usize, jitter: Jitter, master_seed: u64) -> Result<McResult> {
    if n == 0 {
        return Err(SimError::invalid("Monte Carlo needs n >= 1"));
    }
    jitter.validate()?;
    s.validate()?;
    let runs = (0..n as u64)
        .into_par_iter()
        .map(|index| {
            let mut sc = s.clone();
            let mut jr = jitter_rng(master_seed, index);
            let mut scale = |frac: f64| if frac > 0.0 { 1.0 + jr.random_range(-frac..frac) } else { 1.0 };
            sc.harvester.i_peak_a *= scale(jitter.i_peak_frac);
            sc.harvester.i_plateau_a *= scale(jitter.i_plateau_frac);
            sc.harvester.v_peak_v *= scale(jitter.v_peak_frac);
            sc.harvester.v_plateau_v *= scale(jitter.v_plateau_frac);
            sc.harvester.i_peak_a = sc.harvester.i_peak_a.max(sc.harvester.i_plateau_a);
            sc.harvester.v_peak_v = sc.harvester.v_peak_v.max(sc.harvester.v_plateau_v);
            sc.run.seed = derive_seed(master_seed, index);
            let r = run(&sc)?;
            Ok(McRun {
                index,
                seed: sc.run.seed,
                i_peak_a: sc.harvester.i_peak_a,
                i_plateau_a: sc.harvester.i_plateau_a,
                v_peak_v: sc.harvester.v_peak_v,
                v_plateau_v: sc.harvester.v_plateau_v,
                summary: r.summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = mc_stats(&runs, jitter, master_seed);
    Ok(McResult { runs, stats })
}

fn mc_stats(runs: &[McRun], jitter: Jitter, master_seed: u64) -> McStats {
    let collect = |f: &dyn Fn(&Summary) -> Option<f64>| runs.iter().filter_map(|r| f(&r.summary)).collect::<Vec<_>>();
    let activation = collect(&|s| s.events.activation_time_min());
    let first = collect(&|s| s.events.first_cycle_beacons().map(|b| b as f64));
    let per_cycle: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.summary.events.beacons_per_cycle.iter().map(|&b| b as f64))
        .collect();
    McStats {
        n: runs.len(),
        master_seed,
        jitter,
        activated: activation.len(),
        activation_time_min: MeanSd::of(&activation),
        first_cycle_beacons: MeanSd::of(&first),
        beacons_per_cycle: MeanSd::of(&per_cycle),
        delivered: MeanSd::of(&collect(&|s| Some(s.events.delivered as f64))),
        brownouts: MeanSd::of(&collect(&|s| Some(s.events.brownouts as f64))),
    }
}
