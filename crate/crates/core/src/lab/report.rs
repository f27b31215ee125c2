//! Plot-ready CSV tables and JSON summaries. Writers overwrite in place, so
//! rerunning with identical seeds reproduces identical tables.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{BatteryRow, CellResult, ExperimentConfig, LabError, RatioRow, RunSummary, Sweep, WeightRow};
use crate::agent::{EpisodeRecord, StepRecord};
use crate::env::TrajectoryRow;

pub const STEPS_TABLE: &str = "steps.csv";
pub const EPISODES_TABLE: &str = "episodes.csv";
pub const REWARD_CURVE: &str = "reward_curve.csv";
pub const LOSS_CURVE: &str = "loss_curve.csv";
pub const TRAJECTORY_TABLE: &str = "trajectory.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const SUMMARY: &str = "summary.json";
pub const CELLS_TABLE: &str = "cells.csv";
pub const WEIGHT_TABLE: &str = "weight_sweep.csv";
pub const BATTERY_TABLE: &str = "battery_sweep.csv";
pub const RATIO_TABLE: &str = "ratio_sweep.csv";

#[derive(Serialize)]
pub struct TrainReport<'a> {
    pub config: &'a ExperimentConfig,
    pub runs: &'a [RunSummary],
}

#[derive(Serialize)]
struct SweepReport<'a, R> {
    config: &'a ExperimentConfig,
    rows: &'a [R],
    cells: &'a [RunSummary],
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    episode: usize,
    epsilon: f64,
    action: usize,
    a: f64,
    p: f64,
    reward: f64,
    loss: Option<f64>,
}

impl From<&StepRecord> for StepRow {
    fn from(s: &StepRecord) -> Self {
        Self {
            step: s.step,
            episode: s.episode,
            epsilon: s.epsilon,
            action: s.action,
            a: s.trajectory.a,
            p: s.trajectory.p,
            reward: s.trajectory.reward,
            loss: s.loss,
        }
    }
}

#[derive(Serialize)]
struct RewardPoint {
    step: usize,
    reward: f64,
}

#[derive(Serialize)]
struct LossPoint {
    step: usize,
    loss: f64,
}

fn ensure_dir(dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|source| LabError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_table<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let table_err = |source| LabError::Table {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(table_err)?;
    for row in rows {
        w.serialize(row).map_err(table_err)?;
    }
    w.flush().map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Stats tables, learning curves, final-year trajectory, checkpoint and
/// summary of one training run.
pub fn write_train_artifacts(dir: &Path, result: &CellResult) -> Result<(), LabError> {
    ensure_dir(dir)?;
    let stats = &result.outcome.stats;
    write_table(&dir.join(STEPS_TABLE), stats.steps.iter().map(StepRow::from))?;
    write_table::<&EpisodeRecord>(&dir.join(EPISODES_TABLE), &stats.episodes)?;
    write_table(
        &dir.join(REWARD_CURVE),
        stats.steps.iter().map(|s| RewardPoint {
            step: s.step,
            reward: s.trajectory.reward,
        }),
    )?;
    write_table(
        &dir.join(LOSS_CURVE),
        stats.losses().map(|(step, loss)| LossPoint { step, loss }),
    )?;
    write_trajectory(
        &dir.join(TRAJECTORY_TABLE),
        stats.tail(result.env.episode_length).iter().map(|s| s.trajectory),
    )?;
    result
        .outcome
        .params
        .save(&result.outcome.net_cfg, &dir.join(CHECKPOINT))?;
    write_json(&dir.join(SUMMARY), &result.summary)
}

pub fn write_trajectory(path: &Path, rows: impl IntoIterator<Item = TrajectoryRow>) -> Result<(), LabError> {
    write_table(path, rows)
}

fn write_sweep<R: Serialize>(
    dir: &Path,
    table: &str,
    cfg: &ExperimentConfig,
    sweep: &Sweep<R>,
) -> Result<(), LabError> {
    write_table(&dir.join(table), &sweep.rows)?;
    write_table(&dir.join(CELLS_TABLE), &sweep.cells)?;
    write_json(
        &dir.join(SUMMARY),
        &SweepReport {
            config: cfg,
            rows: &sweep.rows,
            cells: &sweep.cells,
        },
    )
}

pub fn write_weight_sweep(dir: &Path, cfg: &ExperimentConfig, sweep: &Sweep<WeightRow>) -> Result<(), LabError> {
    write_sweep(dir, WEIGHT_TABLE, cfg, sweep)
}

pub fn write_battery_sweep(dir: &Path, cfg: &ExperimentConfig, sweep: &Sweep<BatteryRow>) -> Result<(), LabError> {
    write_sweep(dir, BATTERY_TABLE, cfg, sweep)
}

pub fn write_ratio_sweep(dir: &Path, cfg: &ExperimentConfig, sweep: &Sweep<RatioRow>) -> Result<(), LabError> {
    write_sweep(dir, RATIO_TABLE, cfg, sweep)
}
