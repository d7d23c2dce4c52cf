//! LTE-M modem load: phase table, current-trace synthesis, trapezoidal
//! energy integration and the radio-dependent samplers.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Supply voltage at which the phase table was profiled.
pub const V_NOMINAL: f64 = 4.87;
/// Median attach time under nominal radio conditions.
pub const ATTACH_MEDIAN_S: f64 = 30.0;
/// RSRP about which attach time is centred.
pub const RSRP_REFERENCE_DBM: f64 = -97.8;
/// Log-attach-time slope per dB of RSRP below the reference.
pub const DEFAULT_ATTACH_LOG_SLOPE_PER_DB: f64 = 0.005;
pub const ATTACH_CLAMP_S: (f64, f64) = (10.0, 180.0);
/// Idle floor with power-saving mode enabled.
pub const PSM_FLOOR_A: f64 = 3e-6;
/// Width of one synthesized current burst.
const BURST_WIDTH_S: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    NetworkSearch,
    Idle,
    Transmit,
}

impl PhaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseKind::NetworkSearch => "network_search",
            PhaseKind::Idle => "idle",
            PhaseKind::Transmit => "transmit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProfile {
    pub kind: PhaseKind,
    pub duration_s: f64,
    pub i_peak_a: f64,
    pub i_avg_a: f64,
    /// Reference energy at [`V_NOMINAL`].
    pub energy_at_nominal_j: f64,
}

impl PhaseProfile {
    pub fn with_duration(self, duration_s: f64) -> PhaseProfile {
        PhaseProfile {
            duration_s,
            energy_at_nominal_j: self.energy_at_nominal_j * duration_s / self.duration_s,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    Terrestrial,
    NtnBand2,
}

impl BandMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandMode::Terrestrial => "terrestrial",
            BandMode::NtnBand2 => "ntn_band2",
        }
    }
}

/// How the modem's supply current responds to rail voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// Regulated module: power is fixed, current rises as the rail sags.
    ConstantPower,
    /// Current as profiled at the nominal supply, regardless of rail voltage.
    ConstantCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModemConfig {
    pub psm_enabled: bool,
    pub band_mode: BandMode,
    pub idle_interval_s: f64,
    pub v_min_operate_v: f64,
    pub i_startup_req_a: f64,
    /// Transmit-energy multiplier when locked to the satellite band.
    pub ntn_tx_scale: f64,
    pub load_model: LoadModel,
}

impl Default for ModemConfig {
    fn default() -> Self {
        ModemConfig {
            psm_enabled: false,
            band_mode: BandMode::Terrestrial,
            idle_interval_s: 120.0,
            v_min_operate_v: 3.2,
            i_startup_req_a: 0.25,
            ntn_tx_scale: 1.4,
            load_model: LoadModel::ConstantPower,
        }
    }
}

impl ModemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.idle_interval_s > 0.0 && self.idle_interval_s.is_finite()) {
            return Err(SimError::invalid("modem.idle_interval_s must be > 0"));
        }
        if !(self.v_min_operate_v > 0.0) {
            return Err(SimError::invalid("modem.v_min_operate_v must be > 0"));
        }
        if !(self.i_startup_req_a >= 0.0) {
            return Err(SimError::invalid("modem.i_startup_req_a must be >= 0"));
        }
        if !(self.ntn_tx_scale > 0.0) {
            return Err(SimError::invalid("modem.ntn_tx_scale must be > 0"));
        }
        Ok(())
    }

    /// Rail current for a profiled current `i_trace` when the rail sits at `v_rail`.
    pub fn rail_current(&self, i_trace: f64, v_rail: f64) -> f64 {
        match self.load_model {
            LoadModel::ConstantCurrent => i_trace,
            LoadModel::ConstantPower => i_trace * V_NOMINAL / v_rail.max(self.v_min_operate_v),
        }
    }

    pub fn phase(&self, kind: PhaseKind) -> PhaseProfile {
        let table = phase_table(self);
        match kind {
            PhaseKind::NetworkSearch => table[0],
            PhaseKind::Idle => table[1],
            PhaseKind::Transmit => table[2],
        }
    }
}

/// Profiled phases: network search, idle and transmit, adjusted for PSM
/// and band mode.
pub fn phase_table(cfg: &ModemConfig) -> [PhaseProfile; 3] {
    let search = PhaseProfile {
        kind: PhaseKind::NetworkSearch,
        duration_s: 30.0,
        i_peak_a: 0.2487,
        i_avg_a: 0.0149,
        energy_at_nominal_j: 2.15,
    };
    let mut idle = PhaseProfile {
        kind: PhaseKind::Idle,
        duration_s: 120.0,
        i_peak_a: 0.0572,
        i_avg_a: 0.00172,
        energy_at_nominal_j: 0.98,
    }
    .with_duration(cfg.idle_interval_s);
    let mut transmit = PhaseProfile {
        kind: PhaseKind::Transmit,
        duration_s: 12.0,
        i_peak_a: 0.2391,
        i_avg_a: 0.00612,
        energy_at_nominal_j: 0.35,
    };
    if cfg.psm_enabled {
        idle.i_avg_a = PSM_FLOOR_A;
        idle.energy_at_nominal_j = PSM_FLOOR_A * V_NOMINAL * idle.duration_s;
    }
    if cfg.band_mode == BandMode::NtnBand2 {
        transmit.i_avg_a *= cfg.ntn_tx_scale;
        transmit.energy_at_nominal_j *= cfg.ntn_tx_scale;
    }
    [search, idle, transmit]
}

/// Synthesize a current trace for `phase` sampled every `dt` seconds.
///
/// The trace is a flat floor plus rectangular bursts at the phase peak;
/// burst count and floor level are solved so that the maximum equals
/// `i_peak` and the mean equals `i_avg`. Burst placement is drawn from
/// `rng`.
pub fn synthesize_current<R: Rng + ?Sized>(phase: &PhaseProfile, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    let coarse = || SimError::CoarseStep {
        phase: phase.kind.as_str(),
        dt,
        i_peak: phase.i_peak_a,
        i_avg: phase.i_avg_a,
    };
    if !(dt > 0.0) || dt > phase.duration_s / 10.0 {
        return Err(coarse());
    }
    let n = (phase.duration_s / dt).round() as usize;
    if phase.i_peak_a <= phase.i_avg_a {
        return Ok(vec![phase.i_avg_a; n]);
    }

    let (peak, avg) = (phase.i_peak_a, phase.i_avg_a);
    let total = avg * n as f64;
    if total < peak {
        return Err(coarse());
    }
    let target_floor = 0.5 * avg;
    let n_burst = ((total - target_floor * n as f64) / (peak - target_floor)).round().max(1.0) as usize;
    let n_burst = n_burst.min(n - 1).min((total / peak).floor() as usize);
    let floor = (total - n_burst as f64 * peak) / (n - n_burst) as f64;

    let width = ((BURST_WIDTH_S / dt).round() as usize).clamp(1, n_burst.max(1));
    let slots = n / width;
    let full = n_burst / width;
    let partial = n_burst % width;
    let needed = full + usize::from(partial > 0);
    if needed > slots {
        return Err(coarse());
    }

    let mut trace = vec![floor; n];
    let chosen = index::sample(rng, slots, needed);
    for (k, slot) in chosen.into_iter().enumerate() {
        let len = if k < full { width } else { partial };
        let start = slot * width;
        trace[start..start + len].fill(peak);
    }
    Ok(trace)
}

/// Trapezoidal energy of a current trace at a fixed supply voltage.
pub fn energy_of_trace(trace: &[f64], supply_v: f64, dt: f64) -> Result<f64> {
    if trace.len() < 2 {
        return Err(SimError::TraceTooShort(trace.len()));
    }
    let charge: f64 = trace.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    Ok(supply_v * charge)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConditions {
    pub rsrp_mean_dbm: f64,
    pub rsrp_sd_db: f64,
    pub rsrq_mean_db: f64,
    pub sinr_mean_db: f64,
    pub terrestrial_latency_s: [f64; 2],
    pub ntn_latency_s: [f64; 2],
    /// Log-space attach stretch per dB of RSRP below the reference.
    pub attach_log_slope_per_db: f64,
}

impl Default for RadioConditions {
    fn default() -> Self {
        RadioConditions {
            rsrp_mean_dbm: RSRP_REFERENCE_DBM,
            rsrp_sd_db: 3.9,
            rsrq_mean_db: -9.3,
            sinr_mean_db: 11.5,
            terrestrial_latency_s: [0.0, 0.015],
            ntn_latency_s: [0.020, 0.040],
            attach_log_slope_per_db: DEFAULT_ATTACH_LOG_SLOPE_PER_DB,
        }
    }
}

impl RadioConditions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rsrp_sd_db >= 0.0) || !self.rsrp_mean_dbm.is_finite() {
            return Err(SimError::invalid("radio.rsrp_sd_db must be >= 0 and rsrp finite"));
        }
        if !(self.attach_log_slope_per_db >= 0.0 && self.attach_log_slope_per_db.is_finite()) {
            return Err(SimError::invalid("radio.attach_log_slope_per_db must be >= 0"));
        }
        for (name, [lo, hi]) in [("terrestrial_latency_s", self.terrestrial_latency_s), ("ntn_latency_s", self.ntn_latency_s)] {
            if !(lo >= 0.0 && hi >= lo) {
                return Err(SimError::invalid(format!("radio.{name} must be an ordered non-negative range")));
            }
        }
        Ok(())
    }
}

/// Attach (network search) duration.
///
/// Log-normal with a 30 s median at the reference RSRP. The RSRP for each
/// attach is drawn from the configured mean and spread; every dB below the
/// reference stretches the attach by `attach_log_slope_per_db` in log
/// space.
pub fn sample_attach_duration<R: Rng + ?Sized>(rc: &RadioConditions, rng: &mut R) -> f64 {
    let rsrp = if rc.rsrp_sd_db > 0.0 {
        Normal::new(rc.rsrp_mean_dbm, rc.rsrp_sd_db)
            .expect("validated spread")
            .sample(rng)
    } else {
        rc.rsrp_mean_dbm
    };
    let stretch = (rc.attach_log_slope_per_db * (RSRP_REFERENCE_DBM - rsrp)).exp();
    (ATTACH_MEDIAN_S * stretch).clamp(ATTACH_CLAMP_S.0, ATTACH_CLAMP_S.1)
}

/// One-way link latency for a delivered beacon.
pub fn link_latency<R: Rng + ?Sized>(cfg: &ModemConfig, rc: &RadioConditions, rng: &mut R) -> f64 {
    let [lo, hi] = match cfg.band_mode {
        BandMode::Terrestrial => rc.terrestrial_latency_s,
        BandMode::NtnBand2 => rc.ntn_latency_s,
    };
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Synthesized trace with prefix sums for O(1) charge queries.
#[derive(Debug, Clone)]
pub struct PhaseTrace {
    pub kind: PhaseKind,
    pub dt: f64,
    pub duration_s: f64,
    cumulative: Vec<f64>,
}

impl PhaseTrace {
    pub fn new(kind: PhaseKind, samples: &[f64], dt: f64) -> Self {
        let mut cumulative = Vec::with_capacity(samples.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &s in samples {
            acc += s * dt;
            cumulative.push(acc);
        }
        PhaseTrace {
            kind,
            dt,
            duration_s: samples.len() as f64 * dt,
            cumulative,
        }
    }

    fn charge_until(&self, t: f64) -> f64 {
        let n = self.cumulative.len() - 1;
        if n == 0 || t <= 0.0 {
            return 0.0;
        }
        let pos = t / self.dt;
        let k = (pos.floor() as usize).min(n);
        if k == n {
            return self.cumulative[n];
        }
        let sample = (self.cumulative[k + 1] - self.cumulative[k]) / self.dt;
        self.cumulative[k] + sample * (t - k as f64 * self.dt)
    }

    /// Charge drawn between phase-relative times `t0` and `t1`, treating
    /// each sample as constant over its interval.
    pub fn charge_between(&self, t0: f64, t1: f64) -> f64 {
        self.charge_until(t1) - self.charge_until(t0)
    }
}
