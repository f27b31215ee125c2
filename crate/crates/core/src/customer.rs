//! Customer response: how each household splits its net demand or surplus
//! between the community battery and the service provider, and what it pays.
//!
//! Prices are linear in quantity, so every comparison is on per-unit
//! coefficients. Ties go to the service provider.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CustomerKind {
    Consumer,
    Prosumer,
}

/// Hourly demand and generation of one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub id: usize,
    pub kind: CustomerKind,
    pub demand: Vec<f64>,
    /// Identically zero for consumers.
    pub generation: Vec<f64>,
}

impl CustomerProfile {
    pub fn consumer(id: usize, demand: Vec<f64>) -> Self {
        let generation = vec![0.0; demand.len()];
        Self {
            id,
            kind: CustomerKind::Consumer,
            demand,
            generation,
        }
    }

    pub fn prosumer(id: usize, demand: Vec<f64>, generation: Vec<f64>) -> Self {
        assert_eq!(demand.len(), generation.len(), "profile lengths differ");
        Self {
            id,
            kind: CustomerKind::Prosumer,
            demand,
            generation,
        }
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    /// Net demand and net surplus at step `t`; at most one is nonzero.
    pub fn net_position(&self, t: usize) -> (f64, f64) {
        let d = self.demand[t];
        let g = self.generation[t];
        ((d - g).max(0.0), (g - d).max(0.0))
    }
}

/// Retail coefficient `a` and purchase coefficient `p` set by the provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceAction {
    pub retail: f64,
    pub purchase: f64,
}

/// One customer's routing for one step (all kWh).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepAllocation {
    pub demand_sp: f64,
    pub demand_battery: f64,
    pub surplus_sp: f64,
    pub surplus_battery: f64,
}

impl StepAllocation {
    pub fn total_demand(&self) -> f64 {
        self.demand_sp + self.demand_battery
    }

    pub fn total_surplus(&self) -> f64 {
        self.surplus_sp + self.surplus_battery
    }
}

/// Splits net demand into `(from_battery, from_provider)`.
///
/// The battery is used only when its tariff undercuts the retail price, and
/// then only up to what it can still deliver this step.
pub fn allocate_demand(
    net_demand: f64,
    action: &PriceAction,
    battery_available: f64,
    tariff_discharge: f64,
) -> (f64, f64) {
    debug_assert!(net_demand >= 0.0 && battery_available >= 0.0);
    if tariff_discharge < action.retail {
        let from_battery = net_demand.min(battery_available);
        (from_battery, net_demand - from_battery)
    } else {
        (0.0, net_demand)
    }
}

/// Splits surplus into `(to_battery, to_provider)`.
pub fn allocate_surplus(surplus: f64, action: &PriceAction, charge_available: f64, tariff_charge: f64) -> (f64, f64) {
    debug_assert!(surplus >= 0.0 && charge_available >= 0.0);
    if tariff_charge > action.purchase {
        let to_battery = surplus.min(charge_available);
        (to_battery, surplus - to_battery)
    } else {
        (0.0, surplus)
    }
}

pub fn consumer_cost(alloc: &StepAllocation, action: &PriceAction, tariff_discharge: f64) -> f64 {
    debug_assert!(alloc.total_surplus() == 0.0, "consumer with surplus");
    tariff_discharge * alloc.demand_battery + action.retail * alloc.demand_sp
}

/// Negative values are profit.
pub fn prosumer_cost(alloc: &StepAllocation, action: &PriceAction, tariff_discharge: f64, tariff_charge: f64) -> f64 {
    tariff_discharge * alloc.demand_battery + action.retail * alloc.demand_sp
        - tariff_charge * alloc.surplus_battery
        - action.purchase * alloc.surplus_sp
}
