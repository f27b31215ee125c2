//! Community battery model.
//!
//! State of charge evolves as
//! `soc' = soc + (charge * eta - discharge / eta) / capacity`, with SOC kept
//! inside `[soc_min, soc_max]` and per-step energy caps on both directions.
//! One step is one hour, so kW caps and kWh-per-step caps coincide.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Fraction of nominal capacity used for the default charge/discharge caps.
pub const DEFAULT_POWER_FRACTION: f64 = 0.05;

/// Slack allowed when checking dispatch preconditions against headroom.
const HEADROOM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    /// Nominal capacity in kWh.
    pub capacity_kwh: f64,
    /// Round-trip is `efficiency^2`; applied once on each leg.
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Maximum energy accepted for charging in one step (kWh).
    pub max_charge_kwh: f64,
    /// Maximum energy delivered by discharging in one step (kWh).
    pub max_discharge_kwh: f64,
    /// Price customers pay per kWh drawn from the battery (`b_p`).
    pub tariff_discharge: f64,
    /// Price prosumers receive per kWh stored in the battery (`b_s`).
    pub tariff_charge: f64,
    /// SOC at episode reset.
    pub initial_soc: f64,
}

impl BatteryConfig {
    /// Battery with power caps at 5% of capacity and the default tariffs.
    pub fn with_capacity(capacity_kwh: f64) -> Self {
        Self {
            capacity_kwh,
            efficiency: 0.9,
            soc_min: 0.1,
            soc_max: 0.9,
            max_charge_kwh: DEFAULT_POWER_FRACTION * capacity_kwh,
            max_discharge_kwh: DEFAULT_POWER_FRACTION * capacity_kwh,
            tariff_discharge: 0.3,
            tariff_charge: 0.6,
            initial_soc: 0.5,
        }
    }

    /// Rescales capacity and resets both caps to 5% of the new capacity.
    pub fn rescaled(&self, capacity_kwh: f64) -> Self {
        Self {
            capacity_kwh,
            max_charge_kwh: DEFAULT_POWER_FRACTION * capacity_kwh,
            max_discharge_kwh: DEFAULT_POWER_FRACTION * capacity_kwh,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(format!("battery: {msg}")));
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return bad(format!("capacity_kwh must be positive, got {}", self.capacity_kwh));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad(format!("efficiency must lie in (0, 1], got {}", self.efficiency));
        }
        if !(0.0..1.0).contains(&self.soc_min) || !(self.soc_max > self.soc_min && self.soc_max <= 1.0) {
            return bad(format!(
                "need 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                self.soc_min, self.soc_max
            ));
        }
        if !(self.initial_soc >= self.soc_min && self.initial_soc <= self.soc_max) {
            return bad(format!("initial_soc {} outside the safe interval", self.initial_soc));
        }
        for (name, v) in [
            ("max_charge_kwh", self.max_charge_kwh),
            ("max_discharge_kwh", self.max_discharge_kwh),
            ("tariff_discharge", self.tariff_discharge),
            ("tariff_charge", self.tariff_charge),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self::with_capacity(30.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
}

impl BatteryState {
    pub fn initial(cfg: &BatteryConfig) -> Self {
        Self { soc: cfg.initial_soc }
    }
}

/// Energy actually moved into and out of the battery during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryStepFlows {
    pub charge_accepted: f64,
    pub discharge_accepted: f64,
}

/// Largest charge (kWh, before losses) the battery can take this step.
pub fn charge_headroom(cfg: &BatteryConfig, st: &BatteryState) -> f64 {
    let room = ((cfg.soc_max - st.soc) * cfg.capacity_kwh / cfg.efficiency).max(0.0);
    cfg.max_charge_kwh.min(room)
}

/// Largest energy (kWh, after losses) the battery can deliver this step.
pub fn discharge_headroom(cfg: &BatteryConfig, st: &BatteryState) -> f64 {
    let stored = ((st.soc - cfg.soc_min) * cfg.capacity_kwh * cfg.efficiency).max(0.0);
    cfg.max_discharge_kwh.min(stored)
}

/// Applies the aggregate flows of one step to the state of charge.
///
/// Both flows must respect the headrooms computed at the start of the step;
/// anything else is a dispatch bug and panics. The result is clamped onto the
/// safe interval to absorb rounding at the boundaries.
pub fn apply_step(cfg: &BatteryConfig, st: &BatteryState, flows: &BatteryStepFlows) -> BatteryState {
    let charge_cap = charge_headroom(cfg, st);
    let discharge_cap = discharge_headroom(cfg, st);
    assert!(
        flows.charge_accepted >= 0.0 && flows.charge_accepted <= charge_cap + HEADROOM_SLACK,
        "charge {} exceeds headroom {}",
        flows.charge_accepted,
        charge_cap
    );
    assert!(
        flows.discharge_accepted >= 0.0 && flows.discharge_accepted <= discharge_cap + HEADROOM_SLACK,
        "discharge {} exceeds headroom {}",
        flows.discharge_accepted,
        discharge_cap
    );
    if flows.charge_accepted == 0.0 && flows.discharge_accepted == 0.0 {
        return *st;
    }
    let delta = (flows.charge_accepted * cfg.efficiency - flows.discharge_accepted / cfg.efficiency) / cfg.capacity_kwh;
    BatteryState {
        soc: (st.soc + delta).clamp(cfg.soc_min, cfg.soc_max),
    }
}
