//! Experiment harness: training runs, the three sweeps, and their reports.
//!
//! Every sweep cell owns its environment, agent and RNG; cells may run in
//! parallel but results are always assembled in grid order.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{train, TrainOutcome, TrainStats};
use crate::customer::CustomerKind;
use crate::env::EnvConfig;
use crate::error::{CheckpointError, ConfigError, DataError, EnvError};
use crate::market::WeightConfig;

pub use config::{EnvSettings, ExperimentConfig, SweepConfig};

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Table {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Outcome of one training run, measured over its final episode-length
/// window. Profits are negated mean per-step costs per individual member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub capacity_kwh: f64,
    pub consumers: usize,
    pub prosumers: usize,
    pub window_steps: usize,
    pub total_last_year_reward: f64,
    pub avg_reward: f64,
    pub avg_operation_cost: f64,
    pub avg_consumer_profit: f64,
    pub avg_prosumer_profit: f64,
    pub avg_sp_profit: f64,
    pub final_epsilon: f64,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn consumer_fraction(&self) -> f64 {
        self.consumers as f64 / (self.consumers + self.prosumers) as f64
    }
}

/// Summarizes the last `episode_length` steps of a run.
pub fn summarize(run_id: &str, seed: u64, env: &EnvConfig, stats: &TrainStats, wall_time_s: f64) -> RunSummary {
    let window = stats.tail(env.episode_length);
    let n = window.len().max(1) as f64;
    let consumers = env.count(CustomerKind::Consumer);
    let prosumers = env.count(CustomerKind::Prosumer);
    let per_member = |total: f64, members: usize| if members == 0 { 0.0 } else { -total / n / members as f64 };

    let total_reward: f64 = window.iter().map(|s| s.trajectory.reward).sum();
    let psi: f64 = window.iter().map(|s| s.trajectory.psi).sum();
    let phi_c: f64 = window.iter().map(|s| s.trajectory.phi_consumers_total).sum();
    let phi_p: f64 = window.iter().map(|s| s.trajectory.phi_prosumers_total).sum();

    RunSummary {
        run_id: run_id.to_string(),
        seed,
        alpha: env.weights.alpha,
        beta: env.weights.beta,
        capacity_kwh: env.battery.capacity_kwh,
        consumers,
        prosumers,
        window_steps: window.len(),
        total_last_year_reward: total_reward,
        avg_reward: total_reward / n,
        avg_operation_cost: -total_reward / n,
        avg_consumer_profit: per_member(phi_c, consumers),
        avg_prosumer_profit: per_member(phi_p, prosumers),
        avg_sp_profit: -psi / n,
        final_epsilon: stats.final_epsilon(),
        wall_time_s,
    }
}

/// A single training job: fully specified config plus the agent seed.
#[derive(Debug, Clone)]
pub struct Cell {
    pub cfg: ExperimentConfig,
    pub seed: u64,
}

pub struct CellResult {
    pub summary: RunSummary,
    pub env: EnvConfig,
    pub outcome: TrainOutcome,
}

pub fn run_cell(cell: &Cell) -> Result<CellResult, LabError> {
    let env = cell.cfg.env_config(cell.cfg.customers()?);
    let agent = cell.cfg.agent_config(cell.seed);
    let started = Instant::now();
    let outcome = train(&env, &agent)?;
    let summary = summarize(
        &cell.cfg.run_id,
        cell.seed,
        &env,
        &outcome.stats,
        started.elapsed().as_secs_f64(),
    );
    Ok(CellResult { summary, env, outcome })
}

fn run_summaries(cells: &[Cell]) -> Result<Vec<RunSummary>, LabError> {
    cells.par_iter().map(|c| run_cell(c).map(|r| r.summary)).collect()
}

/// Trains once per seed and writes every artifact under
/// `<output_dir>/<run_id>/seed-<seed>/`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>, LabError> {
    let root = run_dir(cfg);
    let cells: Vec<Cell> = cfg.seeds.iter().map(|&seed| Cell { cfg: cfg.clone(), seed }).collect();
    let summaries = cells
        .par_iter()
        .map(|cell| {
            let result = run_cell(cell)?;
            let dir = root.join(format!("seed-{}", cell.seed));
            report::write_train_artifacts(&dir, &result)?;
            Ok(result.summary)
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    report::write_json(
        &root.join("summary.json"),
        &report::TrainReport {
            config: cfg,
            runs: &summaries,
        },
    )?;
    Ok(summaries)
}

pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join(&cfg.run_id)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

/// Seed-averaged row of the weight sweep; profits are per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub alpha: f64,
    pub beta: f64,
    pub sp_weight: f64,
    #[serde(rename = "avg_c_profit_per_member")]
    pub avg_consumer_profit: f64,
    #[serde(rename = "avg_p_profit_per_member")]
    pub avg_prosumer_profit: f64,
    pub avg_sp_profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub capacity_kwh: f64,
    pub power_cap_kwh: f64,
    pub total_last_year_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub consumer_fraction: f64,
    pub consumers: usize,
    pub prosumers: usize,
    pub avg_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep<R> {
    pub rows: Vec<R>,
    pub cells: Vec<RunSummary>,
}

fn grid_cells<K: Copy>(cfg: &ExperimentConfig, keys: &[K], apply: impl Fn(&mut ExperimentConfig, K)) -> Vec<Cell> {
    keys.iter()
        .flat_map(|&k| {
            let mut c = cfg.clone();
            apply(&mut c, k);
            cfg.seeds.iter().map(move |&seed| Cell { cfg: c.clone(), seed })
        })
        .collect()
}

pub fn run_sweep_weights(cfg: &ExperimentConfig) -> Result<Sweep<WeightRow>, LabError> {
    for &(a, b) in &cfg.sweep.weight_grid {
        WeightConfig::new(a, b)?;
    }
    let cells = grid_cells(cfg, &cfg.sweep.weight_grid, |c, (alpha, beta)| {
        c.env.weights = WeightConfig { alpha, beta };
    });
    let summaries = run_summaries(&cells)?;
    let rows = summaries
        .chunks(cfg.seeds.len())
        .zip(&cfg.sweep.weight_grid)
        .map(|(group, &(alpha, beta))| WeightRow {
            alpha,
            beta,
            sp_weight: 1.0 - alpha - beta,
            avg_consumer_profit: mean(group.iter().map(|s| s.avg_consumer_profit)),
            avg_prosumer_profit: mean(group.iter().map(|s| s.avg_prosumer_profit)),
            avg_sp_profit: mean(group.iter().map(|s| s.avg_sp_profit)),
        })
        .collect();
    Ok(Sweep { rows, cells: summaries })
}

pub fn run_sweep_battery(cfg: &ExperimentConfig) -> Result<Sweep<BatteryRow>, LabError> {
    if let Some(bad) = cfg.sweep.capacities.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(ConfigError::Invalid(format!("battery capacity must be positive, got {bad}")).into());
    }
    cfg.sweep.battery_weights.validate()?;
    let cells = grid_cells(cfg, &cfg.sweep.capacities, |c, cap| {
        c.env.battery = c.env.battery.rescaled(cap);
        c.env.weights = cfg.sweep.battery_weights;
    });
    let summaries = run_summaries(&cells)?;
    let rows = summaries
        .chunks(cfg.seeds.len())
        .zip(&cfg.sweep.capacities)
        .map(|(group, &cap)| BatteryRow {
            capacity_kwh: cap,
            power_cap_kwh: cfg.env.battery.rescaled(cap).max_charge_kwh,
            total_last_year_reward: mean(group.iter().map(|s| s.total_last_year_reward)),
        })
        .collect();
    Ok(Sweep { rows, cells: summaries })
}

pub fn run_sweep_ratio(cfg: &ExperimentConfig) -> Result<Sweep<RatioRow>, LabError> {
    if let Some(bad) = cfg.sweep.consumer_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(ConfigError::Invalid(format!("consumer fraction must lie in [0, 1], got {bad}")).into());
    }
    let cells = grid_cells(cfg, &cfg.sweep.consumer_fractions, |c, f| {
        c.dataset.prosumer_fraction = 1.0 - f;
    });
    let summaries = run_summaries(&cells)?;
    let rows = summaries
        .chunks(cfg.seeds.len())
        .zip(&cfg.sweep.consumer_fractions)
        .map(|(group, &f)| RatioRow {
            consumer_fraction: f,
            consumers: group[0].consumers,
            prosumers: group[0].prosumers,
            avg_reward: mean(group.iter().map(|s| s.avg_reward)),
        })
        .collect();
    Ok(Sweep { rows, cells: summaries })
}
