use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use microgrid_pricing::lab::{self, report, ExperimentConfig};
use microgrid_pricing::profile::synth_profiles;

#[derive(Parser)]
#[command(
    name = "microgrid-lab",
    version,
    about = "Train and sweep DQN pricing agents on a P2P microgrid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed and write stats, checkpoint and summary.
    Train(Common),
    /// Sweep consumer/prosumer/provider weights.
    SweepWeights(Common),
    /// Sweep community battery capacity.
    SweepBattery(Common),
    /// Sweep the share of consumers at fixed customer count.
    SweepRatio(Common),
    /// Write the synthetic hourly profile as a `load_kwh,pv_kwh` table.
    SynthData {
        #[arg(long, default_value_t = 8760)]
        hours: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated agent seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Profile CSV path, or `synthetic`.
    #[arg(long)]
    data: Option<String>,
    /// Dotted override, e.g. `--set agent.total_steps=5000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        if !self.seed.is_empty() {
            overrides.push(format!("seeds={:?}", self.seed));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output_dir={}", serde_json::to_string(out)?));
        }
        if let Some(data) = &self.data {
            overrides.push(format!("dataset.source={}", serde_json::to_string(data)?));
        }
        overrides.extend(self.set.iter().cloned());
        Ok(ExperimentConfig::load(self.config.as_deref(), &overrides)?)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let runs = lab::run_train(&cfg)?;
            for r in &runs {
                println!(
                    "seed {:>3}  last-year reward {:>12.3}  avg C {:>8.4}  avg P {:>8.4}  avg SP {:>8.4}  eps {:.3}  {:.1}s",
                    r.seed,
                    r.total_last_year_reward,
                    r.avg_consumer_profit,
                    r.avg_prosumer_profit,
                    r.avg_sp_profit,
                    r.final_epsilon,
                    r.wall_time_s
                );
            }
            println!("artifacts in {}", lab::run_dir(&cfg).display());
        }
        Command::SweepWeights(common) => {
            let cfg = common.load()?;
            let sweep = lab::run_sweep_weights(&cfg)?;
            let dir = lab::run_dir(&cfg).join("weights");
            report::write_weight_sweep(&dir, &cfg, &sweep)?;
            println!("alpha  beta  sp     C/member  P/member  SP");
            for r in &sweep.rows {
                println!(
                    "{:<5}  {:<4}  {:<5.2}  {:>8.4}  {:>8.4}  {:>8.4}",
                    r.alpha, r.beta, r.sp_weight, r.avg_consumer_profit, r.avg_prosumer_profit, r.avg_sp_profit
                );
            }
            println!("tables in {}", dir.display());
        }
        Command::SweepBattery(common) => {
            let cfg = common.load()?;
            let sweep = lab::run_sweep_battery(&cfg)?;
            let dir = lab::run_dir(&cfg).join("battery");
            report::write_battery_sweep(&dir, &cfg, &sweep)?;
            for r in &sweep.rows {
                println!(
                    "capacity {:>6.1} kWh  cap {:>5.2}  total reward {:>12.3}",
                    r.capacity_kwh, r.power_cap_kwh, r.total_last_year_reward
                );
            }
            println!("tables in {}", dir.display());
        }
        Command::SweepRatio(common) => {
            let cfg = common.load()?;
            let sweep = lab::run_sweep_ratio(&cfg)?;
            let dir = lab::run_dir(&cfg).join("ratio");
            report::write_ratio_sweep(&dir, &cfg, &sweep)?;
            for r in &sweep.rows {
                println!(
                    "consumer fraction {:.2} ({} C / {} P)  avg reward {:>8.4}",
                    r.consumer_fraction, r.consumers, r.prosumers, r.avg_reward
                );
            }
            println!("tables in {}", dir.display());
        }
        Command::SynthData { hours, seed, out } => {
            synth_profiles(hours, seed)
                .write_csv(&out)
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}
