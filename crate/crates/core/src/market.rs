//! Service provider and utility-grid accounting, the weighted operation cost,
//! and a closed cash ledger over every agent in the microgrid.

use serde::{Deserialize, Serialize};

use crate::battery::BatteryConfig;
use crate::customer::{consumer_cost, prosumer_cost, CustomerKind, PriceAction, StepAllocation};
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Per-kWh price the utility grid charges the provider.
    pub sigma: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self { sigma: 0.15 }
    }
}

/// Weights of consumer (`alpha`) and prosumer (`beta`) costs; the provider
/// gets `1 - alpha - beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl WeightConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ConfigError> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn provider_weight(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = (0.0..=1.0).contains(&self.alpha)
            && (0.0..=1.0).contains(&self.beta)
            && self.alpha + self.beta <= 1.0 + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!(
                "weights need alpha, beta in [0, 1] and alpha + beta <= 1, got ({}, {})",
                self.alpha, self.beta
            )))
        }
    }
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { alpha: 0.3, beta: 0.3 }
    }
}

pub fn ug_cost(total_sp_demand: f64, cfg: &ProviderConfig) -> f64 {
    cfg.sigma * total_sp_demand
}

/// Provider cost: grid purchase plus prosumer buy-back minus retail revenue.
/// Negative is profit.
pub fn provider_cost(total_sp_demand: f64, total_sp_surplus: f64, action: &PriceAction, cfg: &ProviderConfig) -> f64 {
    ug_cost(total_sp_demand, cfg) + action.purchase * total_sp_surplus - action.retail * total_sp_demand
}

pub fn operation_cost(provider: f64, consumers_total: f64, prosumers_total: f64, weights: &WeightConfig) -> f64 {
    weights.provider_weight() * provider + weights.alpha * consumers_total + weights.beta * prosumers_total
}

pub fn reward(operation_cost: f64) -> f64 {
    -operation_cost
}

/// Net money received by each agent during one step (payments are negative).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cashflows {
    /// Indexed like the customer list.
    pub customers: Vec<f64>,
    pub provider: f64,
    pub battery_operator: f64,
    pub utility_grid: f64,
}

impl Cashflows {
    pub fn total(&self) -> f64 {
        self.customers.iter().sum::<f64>() + self.provider + self.battery_operator + self.utility_grid
    }
}

/// Books every payment of the step. Customers pay their Eq.-style cost, the
/// provider keeps retail revenue net of buy-back and grid purchases, the
/// battery operator nets its two tariffs, and the grid receives its charge.
pub fn settle_cashflows(
    allocations: &[(CustomerKind, StepAllocation)],
    action: &PriceAction,
    battery: &BatteryConfig,
    provider: &ProviderConfig,
) -> Cashflows {
    let (b_p, b_s) = (battery.tariff_discharge, battery.tariff_charge);
    let customers = allocations
        .iter()
        .map(|(kind, a)| match kind {
            CustomerKind::Consumer => -consumer_cost(a, action, b_p),
            CustomerKind::Prosumer => -prosumer_cost(a, action, b_p, b_s),
        })
        .collect();
    let d_sp: f64 = allocations.iter().map(|(_, a)| a.demand_sp).sum();
    let w_sp: f64 = allocations.iter().map(|(_, a)| a.surplus_sp).sum();
    let d_b: f64 = allocations.iter().map(|(_, a)| a.demand_battery).sum();
    let w_b: f64 = allocations.iter().map(|(_, a)| a.surplus_battery).sum();
    let grid = ug_cost(d_sp, provider);
    Cashflows {
        customers,
        provider: action.retail * d_sp - action.purchase * w_sp - grid,
        battery_operator: b_p * d_b - b_s * w_b,
        utility_grid: grid,
    }
}
