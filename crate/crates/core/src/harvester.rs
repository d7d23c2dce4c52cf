//! Water-activated electrochemical source.
//!
//! The cell is treated as a Thevenin source whose open-circuit voltage and
//! short-circuit current settle exponentially from their post-wetting peaks
//! to a plateau. Water depth scales current capability only. Removing the
//! water decays the output; re-wetting a used cell restores only a fraction
//! of it.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvesterParams {
    /// Open-circuit voltage right after water contact.
    pub v_peak_v: f64,
    /// Settled open-circuit voltage.
    pub v_plateau_v: f64,
    /// Short-circuit current right after water contact.
    pub i_peak_a: f64,
    /// Settled short-circuit current.
    pub i_plateau_a: f64,
    pub tau_v_s: f64,
    pub tau_i_s: f64,
    /// Depth at which the rate factor is exactly 1.
    pub ref_depth_mm: f64,
    /// Knee of the saturating depth curve `d / (d + k)`.
    pub depth_knee_mm: f64,
    /// Output decay constant once the water is gone.
    pub drying_tau_s: f64,
    /// Output multiplier applied on every dry-to-wet transition.
    pub rewet_factor: f64,
    /// Fraction of the Thevenin current the cell sustains under continuous
    /// load. Short-circuit readings are transient; a sustained draw sees a
    /// proportionally larger source resistance.
    pub sustained_current_ratio: f64,
}

impl Default for HarvesterParams {
    fn default() -> Self {
        HarvesterParams {
            v_peak_v: 2.7,
            v_plateau_v: 1.6,
            i_peak_a: 0.450,
            i_plateau_a: 0.150,
            tau_v_s: 600.0,
            tau_i_s: 600.0,
            ref_depth_mm: 1.0,
            depth_knee_mm: DEFAULT_DEPTH_KNEE_MM,
            drying_tau_s: 600.0,
            rewet_factor: 0.3,
            sustained_current_ratio: DEFAULT_SUSTAINED_RATIO,
        }
    }
}

/// Calibrated so the default node activates near 23 min at 1.0 mm depth
/// (see `examples/calibrate.rs`).
pub const DEFAULT_SUSTAINED_RATIO: f64 = 0.195;
/// Calibrated against the 0.5 / 1.0 / 1.5 mm activation targets.
pub const DEFAULT_DEPTH_KNEE_MM: f64 = 0.06;

impl HarvesterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_plateau_v", self.v_plateau_v),
            ("i_plateau_a", self.i_plateau_a),
            ("tau_v_s", self.tau_v_s),
            ("tau_i_s", self.tau_i_s),
            ("ref_depth_mm", self.ref_depth_mm),
            ("drying_tau_s", self.drying_tau_s),
            ("sustained_current_ratio", self.sustained_current_ratio),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::invalid(format!("harvester.{name} must be > 0, got {value}")));
            }
        }
        if self.v_peak_v < self.v_plateau_v {
            return Err(SimError::invalid("harvester.v_peak_v must be >= v_plateau_v"));
        }
        if self.i_peak_a < self.i_plateau_a {
            return Err(SimError::invalid("harvester.i_peak_a must be >= i_plateau_a"));
        }
        if !(0.0..=1.0).contains(&self.rewet_factor) {
            return Err(SimError::invalid("harvester.rewet_factor must lie in [0, 1]"));
        }
        if !(self.depth_knee_mm >= 0.0 && self.depth_knee_mm.is_finite()) {
            return Err(SimError::invalid("harvester.depth_knee_mm must be >= 0"));
        }
        if self.sustained_current_ratio > 1.0 {
            return Err(SimError::invalid("harvester.sustained_current_ratio must be <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvesterState {
    pub wetted: bool,
    /// Cumulative time spent in water.
    pub t_wet: f64,
    pub depth_mm: f64,
    /// Time since the water was removed; zero while wetted.
    pub dry_elapsed: f64,
    /// 1 for a fresh cell, reduced multiplicatively by each re-wetting.
    pub degradation: f64,
}

impl HarvesterState {
    /// A dry cell that has never seen water.
    pub fn fresh(depth_mm: f64) -> Self {
        HarvesterState {
            wetted: false,
            t_wet: 0.0,
            depth_mm,
            dry_elapsed: 0.0,
            degradation: 1.0,
        }
    }

    pub fn never_wetted(&self) -> bool {
        !self.wetted && self.t_wet == 0.0
    }

    fn output_scale(&self, p: &HarvesterParams) -> f64 {
        let drying = if self.wetted {
            1.0
        } else {
            (-self.dry_elapsed / p.drying_tau_s).exp()
        };
        self.degradation * drying
    }
}

fn settle(peak: f64, plateau: f64, t: f64, tau: f64) -> f64 {
    plateau + (peak - plateau) * (-t / tau).exp()
}

/// Open-circuit voltage.
pub fn ocv(p: &HarvesterParams, s: &HarvesterState) -> f64 {
    if s.never_wetted() {
        return 0.0;
    }
    settle(p.v_peak_v, p.v_plateau_v, s.t_wet, p.tau_v_s) * s.output_scale(p)
}

/// Short-circuit current, including the depth rate factor.
pub fn scc(p: &HarvesterParams, s: &HarvesterState) -> f64 {
    if s.never_wetted() {
        return 0.0;
    }
    let depth = depth_rate_factor(s.depth_mm, p.ref_depth_mm, p.depth_knee_mm).unwrap_or(0.0);
    settle(p.i_peak_a, p.i_plateau_a, s.t_wet, p.tau_i_s) * s.output_scale(p) * depth
}

/// Linear source: open-circuit voltage behind an internal resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thevenin {
    pub v_oc: f64,
    pub r_int: f64,
}

impl Thevenin {
    /// Terminal voltage while sourcing `i` amps; never negative.
    pub fn terminal_voltage(&self, i: f64) -> f64 {
        (self.v_oc - i * self.r_int).max(0.0)
    }

    pub fn short_circuit_current(&self) -> f64 {
        self.v_oc / self.r_int
    }
}

/// Thevenin equivalent from the OCV/SCC pair. `None` means the source is
/// absent (open circuit): no water, or zero current capability.
pub fn thevenin(p: &HarvesterParams, s: &HarvesterState) -> Option<Thevenin> {
    let i_sc = scc(p, s);
    let v_oc = ocv(p, s);
    if i_sc <= 0.0 || v_oc <= 0.0 {
        return None;
    }
    Some(Thevenin {
        v_oc,
        r_int: v_oc / i_sc,
    })
}

/// Source seen by a continuous load: the Thevenin equivalent with its
/// resistance divided by the sustained-current ratio.
pub fn sustained_source(p: &HarvesterParams, s: &HarvesterState) -> Option<Thevenin> {
    thevenin(p, s).map(|th| Thevenin {
        v_oc: th.v_oc,
        r_int: th.r_int / p.sustained_current_ratio,
    })
}

/// Multiplier on current capability as a function of water depth.
///
/// `d (ref + k) / (ref (d + k))`: zero with no water, one at the reference
/// depth, saturating for deep water. A zero knee degenerates to a step.
pub fn depth_rate_factor(depth_mm: f64, ref_depth_mm: f64, knee_mm: f64) -> Result<f64> {
    if !(depth_mm >= 0.0) || !depth_mm.is_finite() {
        return Err(SimError::invalid(format!("depth must be >= 0 mm, got {depth_mm}")));
    }
    if !(ref_depth_mm > 0.0) {
        return Err(SimError::invalid("reference depth must be > 0 mm"));
    }
    if depth_mm == 0.0 {
        return Ok(0.0);
    }
    Ok(depth_mm * (ref_depth_mm + knee_mm) / (ref_depth_mm * (depth_mm + knee_mm)))
}

/// Advance the wetting state by `dt` seconds with water present or not.
pub fn advance_water(p: &HarvesterParams, s: &HarvesterState, dt: f64, water_present: bool) -> HarvesterState {
    let mut next = *s;
    if water_present {
        if !s.wetted && !s.never_wetted() {
            next.degradation *= p.rewet_factor;
        }
        next.wetted = true;
        next.dry_elapsed = 0.0;
        next.t_wet += dt;
    } else {
        if s.wetted || s.dry_elapsed > 0.0 {
            next.dry_elapsed += dt;
        }
        next.wetted = false;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wet_at(t: f64) -> HarvesterState {
        HarvesterState {
            wetted: true,
            t_wet: t,
            ..HarvesterState::fresh(1.0)
        }
    }

    #[test]
    fn ocv_endpoints() {
        let p = HarvesterParams::default();
        assert_relative_eq!(ocv(&p, &wet_at(0.0)), 2.7);
        assert_eq!(ocv(&p, &HarvesterState::fresh(1.0)), 0.0);
        // one time constant in: 1.6 + 1.1 / e
        assert_relative_eq!(ocv(&p, &wet_at(p.tau_v_s)), 2.004_667_2, epsilon = 1e-6);
    }

    #[test]
    fn scc_endpoints() {
        let p = HarvesterParams::default();
        assert_relative_eq!(scc(&p, &wet_at(0.0)), 0.450, epsilon = 1e-12);
        let late = scc(&p, &wet_at(10.0 * p.tau_i_s));
        assert!((late - 0.150).abs() <= 0.0015, "{late}");
        assert_eq!(scc(&p, &HarvesterState::fresh(1.0)), 0.0);
    }

    #[test]
    fn thevenin_ratio() {
        let p = HarvesterParams::default();
        let th = thevenin(&p, &wet_at(0.0)).unwrap();
        assert_relative_eq!(th.r_int, 6.0, epsilon = 1e-12);
        let settled = thevenin(&p, &wet_at(1e6)).unwrap();
        assert_relative_eq!(settled.r_int, 1.6 / 0.150, epsilon = 1e-9);
        assert!(thevenin(&p, &HarvesterState::fresh(1.0)).is_none());

        let dry_depth = HarvesterState { depth_mm: 0.0, ..wet_at(10.0) };
        assert!(thevenin(&p, &dry_depth).is_none());
    }

    #[test]
    fn terminal_voltage_is_clamped() {
        let th = Thevenin { v_oc: 2.0, r_int: 10.0 };
        assert_eq!(th.terminal_voltage(0.0), 2.0);
        assert_eq!(th.terminal_voltage(1.0), 0.0);
    }

    #[test]
    fn depth_factor_anchors() {
        assert_eq!(depth_rate_factor(1.0, 1.0, 0.07).unwrap(), 1.0);
        assert_eq!(depth_rate_factor(0.0, 1.0, 0.07).unwrap(), 0.0);
        assert!(depth_rate_factor(1.5, 1.0, 0.07).unwrap() > 1.0);
        assert!(depth_rate_factor(-0.1, 1.0, 0.07).is_err());
    }

    #[test]
    fn rewet_degrades_multiplicatively() {
        let p = HarvesterParams::default();
        let mut s = advance_water(&p, &HarvesterState::fresh(1.0), 1.0, true);
        assert_eq!(s.degradation, 1.0);
        s = advance_water(&p, &s, 5.0, false);
        assert_eq!(s.dry_elapsed, 5.0);
        s = advance_water(&p, &s, 1.0, true);
        assert_relative_eq!(s.degradation, 0.3);
        assert_eq!(s.dry_elapsed, 0.0);
        s = advance_water(&p, &s, 1.0, false);
        s = advance_water(&p, &s, 1.0, true);
        assert_relative_eq!(s.degradation, 0.09, epsilon = 1e-12);
    }

    #[test]
    fn drying_decays_output() {
        let p = HarvesterParams::default();
        let mut s = advance_water(&p, &HarvesterState::fresh(1.0), 100.0, true);
        let wet = ocv(&p, &s);
        s = advance_water(&p, &s, p.drying_tau_s, false);
        assert_relative_eq!(ocv(&p, &s), wet * (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn dry_cell_stays_dry() {
        let p = HarvesterParams::default();
        let s = advance_water(&p, &HarvesterState::fresh(1.0), 10.0, false);
        assert!(s.never_wetted());
        assert_eq!(s.dry_elapsed, 0.0);
    }
}
