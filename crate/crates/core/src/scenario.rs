//! Run configuration and its TOML file format.
//!
//! Every physical quantity carries its unit in the key name. Sections may
//! be omitted entirely; missing keys take their defaults and unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::harvester::HarvesterParams;
use crate::modem::{ModemConfig, RadioConditions};
use crate::node::NodeConfig;
use crate::power_path::{gate_thresholds, BoostParams, GateMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: f64,
    /// Power-path integration step.
    pub dt_s: f64,
    /// Spacing of the rows written to the trace.
    pub trace_interval_s: f64,
    pub seed: u64,
    pub device_id: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            duration_s: 4.0 * 3600.0,
            dt_s: 0.01,
            trace_interval_s: 1.0,
            seed: 1,
            device_id: "leak-node-01".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterEvent {
    pub t_s: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterSection {
    pub depth_mm: f64,
    /// Water presence switches at these instants; dry before the first entry.
    pub schedule: Vec<WaterEvent>,
}

impl Default for WaterSection {
    fn default() -> Self {
        WaterSection {
            depth_mm: 1.0,
            schedule: vec![WaterEvent { t_s: 0.0, present: true }],
        }
    }
}

impl WaterSection {
    pub fn present_at(&self, t: f64) -> bool {
        self.schedule
            .iter()
            .take_while(|e| e.t_s <= t)
            .last()
            .map(|e| e.present)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSection {
    pub capacitance_f: f64,
    /// Equivalent series resistance, seen only by the start-up surge.
    pub esr_ohm: f64,
    pub initial_v_cap_v: f64,
}

impl Default for StorageSection {
    fn default() -> Self {
        StorageSection {
            capacitance_f: 1.5,
            esr_ohm: 0.0,
            initial_v_cap_v: 0.0,
        }
    }
}

/// A complete, self-contained simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub run: RunSection,
    pub water: WaterSection,
    pub storage: StorageSection,
    pub gate: GateMode,
    pub harvester: HarvesterParams,
    pub boost: BoostParams,
    pub modem: ModemConfig,
    pub radio: RadioConditions,
    pub node: NodeConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            run: RunSection::default(),
            water: WaterSection::default(),
            storage: StorageSection::default(),
            gate: GateMode::Measured,
            harvester: HarvesterParams::default(),
            boost: BoostParams::default(),
            modem: ModemConfig::default(),
            radio: RadioConditions::default(),
            node: NodeConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::invalid(format!("{name} must be a positive number, got {v}")))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        positive("run.dt_s", r.dt_s)?;
        positive("run.duration_s", r.duration_s)?;
        positive("run.trace_interval_s", r.trace_interval_s)?;
        if r.duration_s <= r.dt_s {
            return Err(SimError::invalid("run.duration_s must exceed run.dt_s"));
        }
        let ratio = r.trace_interval_s / r.dt_s;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(SimError::invalid("run.trace_interval_s must be a whole multiple of run.dt_s"));
        }
        if r.seed > i64::MAX as u64 {
            return Err(SimError::invalid("run.seed must fit in a signed 64-bit integer"));
        }
        if !(self.water.depth_mm >= 0.0 && self.water.depth_mm.is_finite()) {
            return Err(SimError::invalid("water.depth_mm must be >= 0"));
        }
        for w in self.water.schedule.windows(2) {
            if w[1].t_s <= w[0].t_s {
                return Err(SimError::invalid("water.schedule times must be strictly increasing"));
            }
        }
        if self.water.schedule.iter().any(|e| !(e.t_s >= 0.0 && e.t_s.is_finite())) {
            return Err(SimError::invalid("water.schedule times must be >= 0"));
        }
        positive("storage.capacitance_f", self.storage.capacitance_f)?;
        if !(self.storage.esr_ohm >= 0.0) {
            return Err(SimError::invalid("storage.esr_ohm must be >= 0"));
        }
        if !(self.storage.initial_v_cap_v >= 0.0 && self.storage.initial_v_cap_v <= self.boost.v_out_set_v) {
            return Err(SimError::invalid("storage.initial_v_cap_v must lie in [0, boost.v_out_set_v]"));
        }
        gate_thresholds(&self.gate.params())?;
        self.harvester.validate()?;
        self.boost.validate()?;
        self.modem.validate()?;
        self.radio.validate()?;
        positive("node.trace_dt_s", self.node.trace_dt_s)?;
        if !(self.node.boot_delay_s >= 0.0) {
            return Err(SimError::invalid("node.boot_delay_s must be >= 0"));
        }
        Ok(())
    }

    /// Parse and validate a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            SimError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::invalid(format!("cannot serialize scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Scenario::from_toml_str(&text)
    }

    pub fn n_steps(&self) -> usize {
        (self.run.duration_s / self.run.dt_s).round() as usize
    }

    pub fn trace_stride(&self) -> usize {
        (self.run.trace_interval_s / self.run.dt_s).round().max(1.0) as usize
    }
}
