//! Microgrid pricing environment.
//!
//! Each step the agent posts a (retail, purchase) price pair, customers route
//! their net positions against the battery and the provider, the battery is
//! updated once with the aggregate flows, and the reward is the negated
//! weighted operation cost.

use serde::{Deserialize, Serialize};

use crate::battery::{apply_step, charge_headroom, discharge_headroom, BatteryConfig, BatteryState, BatteryStepFlows};
use crate::customer::{
    allocate_demand, allocate_surplus, consumer_cost, prosumer_cost, CustomerKind, CustomerProfile, PriceAction,
    StepAllocation,
};
use crate::error::{ConfigError, EnvError};
use crate::market::{operation_cost, provider_cost, reward, settle_cashflows, Cashflows, ProviderConfig, WeightConfig};

pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_YEAR: usize = 8760;
pub const OBSERVATION_SIZE: usize = 3;

/// Finite sets of retail and purchase coefficients; joint actions are their
/// product, flattened retail-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionGrid {
    pub retail: Vec<f64>,
    pub purchase: Vec<f64>,
}

impl Default for ActionGrid {
    fn default() -> Self {
        let levels = vec![0.2, 0.4, 0.6, 0.8, 1.0];
        Self {
            retail: levels.clone(),
            purchase: levels,
        }
    }
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.retail.len() * self.purchase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self, index: usize) -> Result<PriceAction, EnvError> {
        action_decode(index, self)
    }
}

pub fn action_decode(index: usize, grid: &ActionGrid) -> Result<PriceAction, EnvError> {
    let count = grid.len();
    if index >= count {
        return Err(EnvError::ActionOutOfRange { index, count });
    }
    let width = grid.purchase.len();
    Ok(PriceAction {
        retail: grid.retail[index / width],
        purchase: grid.purchase[index % width],
    })
}

/// What the agent sees: SOC, last step's realized provider demand, and the
/// hour of day. `features` is the normalized network input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvObservation {
    pub soc: f64,
    pub sp_demand_prev: f64,
    pub hour: usize,
    pub features: [f64; OBSERVATION_SIZE],
}

impl EnvObservation {
    pub fn new(soc: f64, sp_demand_prev: f64, hour: usize, demand_scale: f64) -> Self {
        let features = [
            soc.clamp(0.0, 1.0),
            (sp_demand_prev / demand_scale).clamp(0.0, 1.0),
            hour as f64 / (HOURS_PER_DAY - 1) as f64,
        ];
        Self {
            soc,
            sp_demand_prev,
            hour,
            features,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvObservation,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub next_state: EnvObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub customers: Vec<CustomerProfile>,
    pub battery: BatteryConfig,
    pub provider: ProviderConfig,
    pub weights: WeightConfig,
    pub grid: ActionGrid,
    pub episode_length: usize,
    /// Normalizer for the demand feature; `None` means ten times the mean
    /// total hourly demand.
    pub demand_scale: Option<f64>,
    pub start_hour: usize,
}

impl EnvConfig {
    pub fn new(customers: Vec<CustomerProfile>) -> Self {
        let episode_length = customers.first().map_or(0, |c| c.len()).min(HOURS_PER_YEAR);
        Self {
            customers,
            battery: BatteryConfig::default(),
            provider: ProviderConfig::default(),
            weights: WeightConfig::default(),
            grid: ActionGrid::default(),
            episode_length,
            demand_scale: None,
            start_hour: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.customers.is_empty() {
            return Err(ConfigError::Invalid("at least one customer is required".into()));
        }
        self.battery.validate()?;
        self.weights.validate()?;
        if self.grid.is_empty() {
            return Err(ConfigError::Invalid("action grid is empty".into()));
        }
        if self.episode_length == 0 {
            return Err(ConfigError::Invalid("episode_length must be at least 1".into()));
        }
        if self.start_hour >= HOURS_PER_DAY {
            return Err(ConfigError::Invalid(format!(
                "start_hour {} is not an hour of day",
                self.start_hour
            )));
        }
        if let Some(s) = self.demand_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ConfigError::Invalid(format!("demand_scale must be positive, got {s}")));
            }
        }
        for c in &self.customers {
            if c.generation.len() != c.demand.len() {
                return Err(ConfigError::Invalid(format!("customer {} has mismatched series", c.id)));
            }
            if c.kind == CustomerKind::Consumer && c.generation.iter().any(|&g| g != 0.0) {
                return Err(ConfigError::Invalid(format!("consumer {} has generation", c.id)));
            }
            if c.len() < self.episode_length {
                return Err(ConfigError::EpisodeTooLong {
                    episode_length: self.episode_length,
                    profile_length: c.len(),
                });
            }
        }
        Ok(())
    }

    pub fn resolved_demand_scale(&self) -> f64 {
        self.demand_scale.unwrap_or_else(|| {
            let n = self.customers.len() as f64;
            let steps = self.episode_length.max(1) as f64;
            let per_customer = self
                .customers
                .iter()
                .map(|c| c.demand[..self.episode_length].iter().sum::<f64>() / steps)
                .sum::<f64>()
                / n;
            let scale = 10.0 * per_customer * n;
            if scale > 0.0 {
                scale
            } else {
                1.0
            }
        })
    }

    pub fn count(&self, kind: CustomerKind) -> usize {
        self.customers.iter().filter(|c| c.kind == kind).count()
    }
}

/// Full accounting of one simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: usize,
    pub hour: usize,
    pub action_index: usize,
    pub action: PriceAction,
    pub allocations: Vec<StepAllocation>,
    /// Per consumer, in customer order.
    pub consumer_costs: Vec<f64>,
    /// Per prosumer, in customer order.
    pub prosumer_costs: Vec<f64>,
    pub provider_cost: f64,
    pub operation_cost: f64,
    pub reward: f64,
    pub cashflows: Cashflows,
    pub flows: BatteryStepFlows,
    pub charge_headroom: f64,
    pub discharge_headroom: f64,
    pub soc_before: f64,
    pub soc_after: f64,
    pub total_net_demand: f64,
    pub total_surplus: f64,
    pub sp_demand: f64,
    pub sp_surplus: f64,
}

impl StepResult {
    pub fn consumers_total(&self) -> f64 {
        self.consumer_costs.iter().sum()
    }

    pub fn prosumers_total(&self) -> f64 {
        self.prosumer_costs.iter().sum()
    }
}

/// One row of the exported trajectory table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub hour: usize,
    pub soc: f64,
    pub a: f64,
    pub p: f64,
    pub sp_demand: f64,
    pub sp_surplus: f64,
    pub reward: f64,
    pub psi: f64,
    pub phi_consumers_total: f64,
    pub phi_prosumers_total: f64,
    pub battery_charge: f64,
    pub battery_discharge: f64,
}

impl From<&StepResult> for TrajectoryRow {
    fn from(r: &StepResult) -> Self {
        Self {
            step: r.step,
            hour: r.hour,
            soc: r.soc_after,
            a: r.action.retail,
            p: r.action.purchase,
            sp_demand: r.sp_demand,
            sp_surplus: r.sp_surplus,
            reward: r.reward,
            psi: r.provider_cost,
            phi_consumers_total: r.consumers_total(),
            phi_prosumers_total: r.prosumers_total(),
            battery_charge: r.flows.charge_accepted,
            battery_discharge: r.flows.discharge_accepted,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicrogridEnv {
    cfg: EnvConfig,
    demand_scale: f64,
    battery: BatteryState,
    step: usize,
    sp_demand_prev: f64,
    done: bool,
    seed: u64,
}

impl MicrogridEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let demand_scale = cfg.resolved_demand_scale();
        let battery = BatteryState::initial(&cfg.battery);
        Ok(Self {
            cfg,
            demand_scale,
            battery,
            step: 0,
            sp_demand_prev: 0.0,
            done: false,
            seed: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn battery_state(&self) -> BatteryState {
        self.battery
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The simulation is deterministic; the seed is kept for bookkeeping.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reset(&mut self, seed: u64) -> EnvObservation {
        self.seed = seed;
        self.battery = BatteryState::initial(&self.cfg.battery);
        self.step = 0;
        self.sp_demand_prev = 0.0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> EnvObservation {
        EnvObservation::new(self.battery.soc, self.sp_demand_prev, self.hour(), self.demand_scale)
    }

    fn hour(&self) -> usize {
        (self.cfg.start_hour + self.step) % HOURS_PER_DAY
    }

    pub fn step(&mut self, action_index: usize) -> Result<(Transition, StepResult), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let action = self.cfg.grid.decode(action_index)?;
        let state = self.observation();
        let result = simulate_step(&self.cfg, &self.battery, self.step, self.hour(), action_index, action);

        self.battery = BatteryState { soc: result.soc_after };
        self.sp_demand_prev = result.sp_demand;
        self.step += 1;
        self.done = self.step >= self.cfg.episode_length;

        let transition = Transition {
            state,
            action: action_index,
            reward: result.reward,
            done: self.done,
            next_state: self.observation(),
        };
        Ok((transition, result))
    }
}

/// Pure one-hour market clearing from a given battery state.
pub fn simulate_step(
    cfg: &EnvConfig,
    battery: &BatteryState,
    t: usize,
    hour: usize,
    action_index: usize,
    action: PriceAction,
) -> StepResult {
    let bat = &cfg.battery;
    let charge_room = charge_headroom(bat, battery);
    let discharge_room = discharge_headroom(bat, battery);

    let n = cfg.customers.len();
    let mut allocations = vec![StepAllocation::default(); n];
    let positions: Vec<(f64, f64)> = cfg.customers.iter().map(|c| c.net_position(t)).collect();

    // Surplus (charging) first, then demand (discharging); both draw on
    // start-of-step headroom in ascending customer order.
    let mut charge_left = charge_room;
    for (alloc, &(_, surplus)) in allocations.iter_mut().zip(&positions) {
        let (to_battery, to_sp) = allocate_surplus(surplus, &action, charge_left, bat.tariff_charge);
        charge_left -= to_battery;
        alloc.surplus_battery = to_battery;
        alloc.surplus_sp = to_sp;
    }
    let mut discharge_left = discharge_room;
    for (alloc, &(demand, _)) in allocations.iter_mut().zip(&positions) {
        let (from_battery, from_sp) = allocate_demand(demand, &action, discharge_left, bat.tariff_discharge);
        discharge_left -= from_battery;
        alloc.demand_battery = from_battery;
        alloc.demand_sp = from_sp;
    }

    let mut consumer_costs = Vec::new();
    let mut prosumer_costs = Vec::new();
    for (c, a) in cfg.customers.iter().zip(&allocations) {
        match c.kind {
            CustomerKind::Consumer => consumer_costs.push(consumer_cost(a, &action, bat.tariff_discharge)),
            CustomerKind::Prosumer => {
                prosumer_costs.push(prosumer_cost(a, &action, bat.tariff_discharge, bat.tariff_charge))
            }
        }
    }

    let sp_demand: f64 = allocations.iter().map(|a| a.demand_sp).sum();
    let sp_surplus: f64 = allocations.iter().map(|a| a.surplus_sp).sum();
    let flows = BatteryStepFlows {
        charge_accepted: allocations.iter().map(|a| a.surplus_battery).sum(),
        discharge_accepted: allocations.iter().map(|a| a.demand_battery).sum(),
    };
    let next = apply_step(bat, battery, &flows);

    let psi = provider_cost(sp_demand, sp_surplus, &action, &cfg.provider);
    let rho = operation_cost(
        psi,
        consumer_costs.iter().sum(),
        prosumer_costs.iter().sum(),
        &cfg.weights,
    );
    let kinded: Vec<(CustomerKind, StepAllocation)> = cfg
        .customers
        .iter()
        .map(|c| c.kind)
        .zip(allocations.iter().copied())
        .collect();
    let cashflows = settle_cashflows(&kinded, &action, bat, &cfg.provider);

    StepResult {
        step: t,
        hour,
        action_index,
        action,
        allocations,
        consumer_costs,
        prosumer_costs,
        provider_cost: psi,
        operation_cost: rho,
        reward: reward(rho),
        cashflows,
        flows,
        charge_headroom: charge_room,
        discharge_headroom: discharge_room,
        soc_before: battery.soc,
        soc_after: next.soc,
        total_net_demand: positions.iter().map(|p| p.0).sum(),
        total_surplus: positions.iter().map(|p| p.1).sum(),
        sp_demand,
        sp_surplus,
    }
}
