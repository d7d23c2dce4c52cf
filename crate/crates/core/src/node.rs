//! Firmware lifecycle of the beacon node.
//!
//! Gate closes -> boot -> network attach -> first beacon -> fixed idle ->
//! beacon -> ... until the gate opens again. The idle timer is firmware
//! driven and never looks at the rail voltage; only the gate can cut a
//! cycle short.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::modem::{self, ModemConfig, PhaseKind, PhaseTrace, RadioConditions};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePhase {
    Off,
    Booting,
    Attaching,
    Transmitting,
    Idle,
    Brownout,
}

impl NodePhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodePhase::Off => "off",
            NodePhase::Booting => "booting",
            NodePhase::Attaching => "attaching",
            NodePhase::Transmitting => "transmitting",
            NodePhase::Idle => "idle",
            NodePhase::Brownout => "brownout",
        }
    }

    pub fn powered(&self) -> bool {
        !matches!(self, NodePhase::Off | NodePhase::Brownout)
    }

    /// Phases with an operation in flight that a power loss would abort.
    pub fn busy(&self) -> bool {
        matches!(self, NodePhase::Booting | NodePhase::Attaching | NodePhase::Transmitting)
    }
}

/// Telemetry message carried by each beacon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconPayload {
    pub device_id: String,
    pub seq: u64,
    pub status: String,
    pub timestamp_s: f64,
}

pub const LEAK_ACTIVE: &str = "leak-active";

pub fn beacon_payload(device_id: &str, seq: u64, t: f64) -> BeaconPayload {
    BeaconPayload {
        device_id: device_id.to_string(),
        seq,
        status: LEAK_ACTIVE.to_string(),
        timestamp_s: t,
    }
}

impl BeaconPayload {
    pub fn serialized_len(&self) -> usize {
        serde_json::to_string(self).map(|s| s.len()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconRecord {
    pub seq: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// Rail energy spent on the transmission.
    pub energy_j: f64,
    pub delivered: bool,
    pub latency_s: f64,
    pub cycle_index: u64,
    pub v_start: f64,
    pub v_end: f64,
    pub payload_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: f64,
    pub from: NodePhase,
    pub to: NodePhase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
/// An in-flight operation (boot, attach or transmission) lost to a power cut.
pub struct Brownout {
    pub t: f64,
    /// Phase that was interrupted.
    pub during: NodePhase,
    pub cycle_index: u64,
}

/// Result of one firmware step.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    /// Charge drawn from the rail over the step, in coulombs.
    pub charge: f64,
    pub transitions: Vec<Transition>,
    pub beacon: Option<BeaconRecord>,
    pub brownout: Option<Brownout>,
}

impl StepOutput {
    pub fn mean_current(&self, dt: f64) -> f64 {
        self.charge / dt
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    seq: u64,
    t_start: f64,
    energy_j: f64,
    v_start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    /// Boot time before the attach starts; folded into attach by default.
    pub boot_delay_s: f64,
    /// Sample spacing of the synthesized modem traces.
    pub trace_dt_s: f64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            boot_delay_s: 0.0,
            trace_dt_s: 0.001,
        }
    }
}

/// Firmware state machine plus the modem trace of the current phase.
#[derive(Debug, Clone)]
pub struct Node {
    pub modem: ModemConfig,
    pub radio: RadioConditions,
    pub config: NodeConfig,
    pub device_id: String,
    /// Series resistance between capacitor and load, for the start-up surge.
    pub esr_ohm: f64,
    phase: NodePhase,
    phase_elapsed: f64,
    phase_duration: f64,
    trace: Option<PhaseTrace>,
    next_seq: u64,
    cycle_index: u64,
    inflight: Option<InFlight>,
}

impl Node {
    pub fn new(modem: ModemConfig, radio: RadioConditions, config: NodeConfig, device_id: &str) -> Self {
        Node {
            modem,
            radio,
            config,
            device_id: device_id.to_string(),
            esr_ohm: 0.0,
            phase: NodePhase::Off,
            phase_elapsed: 0.0,
            phase_duration: 0.0,
            trace: None,
            next_seq: 1,
            cycle_index: 0,
            inflight: None,
        }
    }

    pub fn phase(&self) -> NodePhase {
        self.phase
    }

    pub fn phase_elapsed(&self) -> f64 {
        self.phase_elapsed
    }

    /// Number of gate activations seen so far.
    pub fn cycles(&self) -> u64 {
        self.cycle_index
    }

    fn enter<R: Rng + ?Sized>(&mut self, to: NodePhase, t: f64, out: &mut StepOutput, rng: &mut R) -> Result<()> {
        out.transitions.push(Transition { t, from: self.phase, to });
        self.phase = to;
        self.phase_elapsed = 0.0;
        let kind = match to {
            NodePhase::Attaching => Some(PhaseKind::NetworkSearch),
            NodePhase::Transmitting => Some(PhaseKind::Transmit),
            NodePhase::Idle => Some(PhaseKind::Idle),
            _ => None,
        };
        self.trace = None;
        self.phase_duration = match to {
            NodePhase::Booting => self.config.boot_delay_s,
            _ => 0.0,
        };
        if let Some(kind) = kind {
            let mut profile = self.modem.phase(kind);
            if kind == PhaseKind::NetworkSearch {
                profile = profile.with_duration(modem::sample_attach_duration(&self.radio, rng));
            }
            let samples = modem::synthesize_current(&profile, self.config.trace_dt_s, rng)?;
            self.phase_duration = profile.duration_s;
            self.trace = Some(PhaseTrace::new(kind, &samples, self.config.trace_dt_s));
        }
        Ok(())
    }

    fn abort(&mut self, t: f64, v_cap: f64, out: &mut StepOutput) {
        let during = self.phase;
        if let Some(f) = self.inflight.take() {
            out.beacon = Some(BeaconRecord {
                seq: f.seq,
                t_start: f.t_start,
                t_end: t,
                energy_j: f.energy_j,
                delivered: false,
                latency_s: 0.0,
                cycle_index: self.cycle_index,
                v_start: f.v_start,
                v_end: v_cap,
                payload_len: beacon_payload(&self.device_id, f.seq, f.t_start).serialized_len(),
            });
        }
        out.brownout = Some(Brownout {
            t,
            during,
            cycle_index: self.cycle_index,
        });
        out.transitions.push(Transition { t, from: during, to: NodePhase::Brownout });
        self.phase = NodePhase::Brownout;
        self.phase_elapsed = 0.0;
        self.trace = None;
    }

    fn power_down(&mut self, t: f64, out: &mut StepOutput) {
        out.transitions.push(Transition { t, from: self.phase, to: NodePhase::Off });
        self.phase = NodePhase::Off;
        self.phase_elapsed = 0.0;
        self.trace = None;
    }

    /// Advance the firmware by `dt` starting at simulation time `t`.
    ///
    /// `gate_closed` and `v_cap` are the rail conditions at the start of
    /// the step. The returned charge is what the modem pulls from the rail.
    pub fn step<R: Rng + ?Sized>(&mut self, t: f64, gate_closed: bool, v_cap: f64, dt: f64, rng: &mut R) -> Result<StepOutput> {
        let mut out = StepOutput::default();

        if self.phase == NodePhase::Brownout {
            self.power_down(t, &mut out);
        }

        let collapsed = self.phase.powered() && v_cap < self.modem.v_min_operate_v;
        if !gate_closed || collapsed {
            if self.phase.powered() {
                if self.phase.busy() || collapsed {
                    self.abort(t, v_cap, &mut out);
                } else {
                    // Asleep between beacons: power is lost but no operation is.
                    out.transitions.push(Transition { t, from: self.phase, to: NodePhase::Brownout });
                    self.phase = NodePhase::Brownout;
                    self.phase_elapsed = 0.0;
                    self.trace = None;
                }
            }
            return Ok(out);
        }

        if self.phase == NodePhase::Off {
            self.cycle_index += 1;
            self.enter(NodePhase::Booting, t, &mut out, rng)?;
            let surge_sag = self.modem.i_startup_req_a * self.esr_ohm;
            if v_cap - surge_sag < self.modem.v_min_operate_v {
                self.abort(t, v_cap, &mut out);
                return Ok(out);
            }
        }

        let mut consumed = 0.0;
        loop {
            let left = self.phase_duration - self.phase_elapsed;
            if left <= EPS {
                self.finish_phase(t + consumed, v_cap, &mut out, rng)?;
                continue;
            }
            let remaining = dt - consumed;
            if remaining <= EPS {
                break;
            }
            let span = remaining.min(left);
            if let Some(trace) = &self.trace {
                let q = trace.charge_between(self.phase_elapsed, self.phase_elapsed + span);
                let q_rail = self.modem.rail_current(q / span, v_cap) * span;
                out.charge += q_rail;
                if let Some(f) = self.inflight.as_mut() {
                    f.energy_j += q_rail * v_cap;
                }
            }
            self.phase_elapsed += span;
            consumed += span;
        }
        Ok(out)
    }

    fn finish_phase<R: Rng + ?Sized>(&mut self, t: f64, v_cap: f64, out: &mut StepOutput, rng: &mut R) -> Result<()> {
        match self.phase {
            NodePhase::Booting => self.enter(NodePhase::Attaching, t, out, rng),
            NodePhase::Attaching | NodePhase::Idle => {
                self.inflight = Some(InFlight {
                    seq: self.next_seq,
                    t_start: t,
                    energy_j: 0.0,
                    v_start: v_cap,
                });
                self.next_seq += 1;
                self.enter(NodePhase::Transmitting, t, out, rng)
            }
            NodePhase::Transmitting => {
                if let Some(f) = self.inflight.take() {
                    let latency = modem::link_latency(&self.modem, &self.radio, rng);
                    out.beacon = Some(BeaconRecord {
                        seq: f.seq,
                        t_start: f.t_start,
                        t_end: t,
                        energy_j: f.energy_j,
                        delivered: true,
                        latency_s: latency,
                        cycle_index: self.cycle_index,
                        v_start: f.v_start,
                        v_end: v_cap,
                        payload_len: beacon_payload(&self.device_id, f.seq, f.t_start).serialized_len(),
                    });
                }
                self.enter(NodePhase::Idle, t, out, rng)
            }
            NodePhase::Off | NodePhase::Brownout => unreachable!("unpowered phases have no timer"),
        }
    }
}
