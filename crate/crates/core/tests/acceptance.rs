//! Acceptance gate. Each test prints one `[PASS]`/`[FAIL]` line for its
//! criterion before asserting. Run with
//! `cargo test -p microgrid-pricing --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use microgrid_pricing::agent::StepRecord;
use microgrid_pricing::customer::CustomerProfile;
use microgrid_pricing::env::{action_decode, ActionGrid, EnvConfig, MicrogridEnv};
use microgrid_pricing::lab::{self, report, Cell, ExperimentConfig};
use microgrid_pricing::qnet::{grad, loss, Layer, NetParams, Sample};

fn verdict(id: &str, what: &str, ok: bool, detail: impl std::fmt::Display) -> bool {
    // straight to the stderr handle so the line survives output capture
    let line = format!("[{}] {id} {what}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    ok
}

// ---------------------------------------------------------------------------
// 1. Hand-trace oracle
// ---------------------------------------------------------------------------

/// Straight-line evaluation of one market hour for one consumer (demand 2)
/// and one prosumer (demand 2, generation 5), written without touching the
/// library. Returns (phi_c, phi_p, psi, reward, soc_after).
fn hand_trace() -> (f64, f64, f64, f64, f64) {
    let (a, p) = (0.4, 0.4);
    let (b_p, b_s, sigma) = (0.3, 0.6, 0.15);
    let (alpha, beta) = (0.3, 0.3);
    let (cap, eta, soc, soc_min, soc_max) = (30.0, 0.9, 0.5, 0.1, 0.9);
    let p_max = 0.05 * cap;

    let charge_room = f64::min(p_max, (soc_max - soc) * cap / eta);
    let discharge_room = f64::min(p_max, (soc - soc_min) * cap * eta);

    // prosumer surplus 3: battery pays more than the provider
    let surplus = 5.0 - 2.0;
    let w_b = if b_s > p { f64::min(surplus, charge_room) } else { 0.0 };
    let w_sp = surplus - w_b;
    // consumer demand 2: battery cheaper than retail
    let d_b = if b_p < a { f64::min(2.0, discharge_room) } else { 0.0 };
    let d_sp = 2.0 - d_b;

    let phi_c = b_p * d_b + a * d_sp;
    let phi_p = -(b_s * w_b) - p * w_sp;
    let psi = sigma * d_sp + p * w_sp - a * d_sp;
    let rho = (1.0 - alpha - beta) * psi + alpha * phi_c + beta * phi_p;
    let soc_after = soc + (w_b * eta - d_b / eta) / cap;
    (phi_c, phi_p, psi, -rho, soc_after)
}

#[test]
fn c1_hand_trace_oracle() {
    let started = Instant::now();
    let (phi_c, phi_p, psi, r, soc_after) = hand_trace();
    // the oracle itself reproduces the hand-computed figures
    assert!((phi_c - 0.65).abs() < 1e-12 && (phi_p + 1.5).abs() < 1e-12);
    assert!((psi - 0.475).abs() < 1e-12 && (r - 0.065).abs() < 1e-12);

    let customers = vec![
        CustomerProfile::consumer(0, vec![2.0]),
        CustomerProfile::prosumer(1, vec![2.0], vec![5.0]),
    ];
    let mut env = MicrogridEnv::new(EnvConfig::new(customers)).unwrap();
    env.reset(0);
    // a = 0.4 (row 1), p = 0.4 (column 1)
    let (_, step) = env.step(6).unwrap();

    let errs = [
        (step.consumer_costs[0] - 0.65).abs(),
        (step.prosumer_costs[0] + 1.5).abs(),
        (step.provider_cost - 0.475).abs(),
        (step.reward - 0.065).abs(),
        (step.consumer_costs[0] - phi_c).abs(),
        (step.prosumer_costs[0] - phi_p).abs(),
        (step.provider_cost - psi).abs(),
        (step.reward - r).abs(),
        (step.soc_after - soc_after).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let elapsed = started.elapsed();
    let ok = worst <= 1e-12 && elapsed < Duration::from_secs(1);
    assert!(verdict(
        "C1",
        "hand-trace oracle",
        ok,
        format!("max abs err {worst:.2e}, {elapsed:?}")
    ));
}

// ---------------------------------------------------------------------------
// 2. Invariants over random rollouts
// ---------------------------------------------------------------------------

#[test]
fn c2_random_rollout_invariants() {
    let started = Instant::now();
    let cfg = ExperimentConfig::default();
    let env_cfg = cfg.env_config(cfg.customers().unwrap());
    let mut violations = Vec::new();
    let mut steps = 0usize;
    for rollout in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rollout);
        let mut env = MicrogridEnv::new(env_cfg.clone()).unwrap();
        env.reset(rollout);
        let b = &env_cfg.battery;
        loop {
            let (tr, r) = env.step(rng.random_range(0..env_cfg.grid.len())).unwrap();
            steps += 1;
            let mut check = |ok: bool, what: &str| {
                if !ok && violations.len() < 10 {
                    violations.push(format!("rollout {rollout} step {}: {what}", r.step));
                }
            };
            check(
                r.soc_after >= b.soc_min && r.soc_after <= b.soc_max,
                "soc out of bounds",
            );
            let d_b: f64 = r.allocations.iter().map(|a| a.demand_battery).sum();
            let w_b: f64 = r.allocations.iter().map(|a| a.surplus_battery).sum();
            check((d_b + r.sp_demand - r.total_net_demand).abs() <= 1e-9, "demand balance");
            check((w_b + r.sp_surplus - r.total_surplus).abs() <= 1e-9, "surplus balance");
            check(w_b <= r.charge_headroom + 1e-12, "charge beyond headroom");
            check(d_b <= r.discharge_headroom + 1e-12, "discharge beyond headroom");
            check(r.cashflows.total().abs() <= 1e-9, "money not conserved");
            check(r.reward.to_bits() == (-r.operation_cost).to_bits(), "reward != -rho");
            check(
                tr.next_state.features.iter().all(|f| (0.0..=1.0).contains(f)),
                "feature range",
            );
            if tr.done {
                break;
            }
        }
    }
    let elapsed = started.elapsed();
    let ok = violations.is_empty() && steps == 10 * 8760 && elapsed < Duration::from_secs(30);
    let detail = format!(
        "{steps} steps, {} violations, {elapsed:?} {:?}",
        violations.len(),
        violations
    );
    assert!(verdict("C2", "rollout invariants", ok, detail));
}

// ---------------------------------------------------------------------------
// 3. Gradient check
// ---------------------------------------------------------------------------

fn random_net(rng: &mut ChaCha8Rng) -> NetParams {
    let depth = rng.random_range(1..=2);
    let mut sizes = vec![3];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=8));
    }
    sizes.push(rng.random_range(1..=5));
    NetParams {
        layers: sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
            })
            .collect(),
    }
}

#[test]
fn c3_gradient_check() {
    let started = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut max_diff = 0.0f64;
    let mut checked = 0usize;
    for net_seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(net_seed);
        let net = random_net(&mut rng);
        let outputs = net.output_size();
        let inputs: Vec<[f64; 3]> = (0..6).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let batch: Vec<Sample> = inputs
            .iter()
            .map(|x| Sample {
                input: x,
                action: rng.random_range(0..outputs),
                target: rng.random_range(-2.0..2.0),
            })
            .collect();
        let (analytic, _) = grad(&net, &batch);
        let analytic: Vec<f64> = analytic.iter().copied().collect();
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            *plus.iter_mut().nth(i).unwrap() += h;
            *minus.iter_mut().nth(i).unwrap() -= h;
            let numeric = (loss(&plus, &batch) - loss(&minus, &batch)) / (2.0 * h);
            let diff = (a - numeric).abs();
            max_diff = max_diff.max(diff);
            let rel = if diff < 1e-9 {
                0.0
            } else {
                diff / a.abs().max(numeric.abs())
            };
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    let ok = worst <= 1e-4 && elapsed < Duration::from_secs(10);
    assert!(verdict(
        "C3",
        "gradient check",
        ok,
        format!("{checked} params over 20 nets, worst rel err {worst:.2e}, max abs diff {max_diff:.2e}, {elapsed:?}")
    ));
}

// ---------------------------------------------------------------------------
// 4. Learning signal
// ---------------------------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn loss_medians(steps: &[StepRecord], learn_start: usize, total: usize) -> (f64, f64) {
    let window = total / 10;
    let early = steps
        .iter()
        .filter(|s| s.step > learn_start && s.step <= learn_start + window)
        .filter_map(|s| s.loss)
        .collect();
    let late = steps
        .iter()
        .filter(|s| s.step > total - window)
        .filter_map(|s| s.loss)
        .collect();
    (median(early), median(late))
}

#[test]
fn c4_loss_decreases() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.agent.total_steps, 100_000);
    let mut all_ok = true;
    let mut details = Vec::new();
    for seed in [0u64, 1, 2] {
        let started = Instant::now();
        let result = lab::run_cell(&Cell { cfg: cfg.clone(), seed }).unwrap();
        let elapsed = started.elapsed();
        let (early, late) = loss_medians(
            &result.outcome.stats.steps,
            cfg.agent.learn_start,
            cfg.agent.total_steps,
        );
        let ok = late < early && elapsed < Duration::from_secs(300);
        all_ok &= ok;
        details.push(format!(
            "seed {seed}: early {early:.4} late {late:.4} ({:.1}s)",
            elapsed.as_secs_f64()
        ));
    }
    assert!(verdict(
        "C4",
        "loss decreases (baseline, 3 seeds)",
        all_ok,
        details.join("; ")
    ));
}

// ---------------------------------------------------------------------------
// 5-7. Sweep trends
// ---------------------------------------------------------------------------

#[test]
fn c5_battery_capacity_trend() {
    let cfg = ExperimentConfig::default();
    let sweep = lab::run_sweep_battery(&cfg).unwrap();
    let totals: Vec<f64> = sweep.rows.iter().map(|r| r.total_last_year_reward).collect();
    let caps: Vec<f64> = sweep.rows.iter().map(|r| r.capacity_kwh).collect();
    assert_eq!(caps, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
    assert_eq!(sweep.rows[2].power_cap_kwh, 1.5);
    let pairs = totals.windows(2).filter(|w| w[1] <= w[0]).count();
    let ok = pairs >= 3;
    assert!(verdict(
        "C5",
        "battery trend",
        ok,
        format!("{pairs}/4 non-increasing pairs, totals {totals:.2?}")
    ));
}

#[test]
fn c6_consumer_ratio_trend() {
    let cfg = ExperimentConfig::default();
    let sweep = lab::run_sweep_ratio(&cfg).unwrap();
    let avgs: Vec<f64> = sweep.rows.iter().map(|r| r.avg_reward).collect();
    assert_eq!(sweep.rows.len(), 4);
    assert_eq!(sweep.rows[1].prosumers, 5);
    let pairs = avgs.windows(2).filter(|w| w[1] >= w[0]).count();
    let ok = pairs >= 2;
    assert!(verdict(
        "C6",
        "consumer-ratio trend",
        ok,
        format!("{pairs}/3 non-decreasing pairs, avg rewards {avgs:.4?}")
    ));
}

#[test]
fn c7_weight_direction() {
    let mut cfg = ExperimentConfig::default();
    cfg.sweep.weight_grid = vec![(0.2, 0.2), (0.6, 0.2)];
    let sweep = lab::run_sweep_weights(&cfg).unwrap();
    let low = sweep.rows[0].avg_consumer_profit;
    let high = sweep.rows[1].avg_consumer_profit;
    let ok = high > low;
    assert!(verdict(
        "C7",
        "weight direction",
        ok,
        format!("C profit alpha=0.2: {low:.4}, alpha=0.6: {high:.4}")
    ));
}

// ---------------------------------------------------------------------------
// 8. Determinism through the CLI
// ---------------------------------------------------------------------------

fn train_via_cli(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_microgrid-lab"))
        .args(["train", "--seed", "7", "--data", "synthetic", "--out"])
        .arg(out)
        .args([
            "--set",
            "agent.total_steps=3000",
            "--set",
            "agent.learn_start=500",
            "--set",
            "run_id=det",
        ])
        .status()
        .expect("run microgrid-lab");
    assert!(status.success());
}

#[test]
fn c8_cli_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_via_cli(a.path());
    train_via_cli(b.path());
    let files = [
        report::STEPS_TABLE,
        report::EPISODES_TABLE,
        report::REWARD_CURVE,
        report::LOSS_CURVE,
        report::TRAJECTORY_TABLE,
        report::CHECKPOINT,
    ];
    let mut differing = Vec::new();
    for f in files {
        let pa = a.path().join("det/seed-7").join(f);
        let pb = b.path().join("det/seed-7").join(f);
        let (ba, bb) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        if ba.is_empty() || ba != bb {
            differing.push(f);
        }
    }
    let ok = differing.is_empty();
    assert!(verdict(
        "C8",
        "byte-identical train artifacts",
        ok,
        format!("{} files compared, differing {differing:?}", files.len())
    ));
}

// ---------------------------------------------------------------------------
// 9. Action grid
// ---------------------------------------------------------------------------

#[test]
fn c9_action_grid() {
    let grid = ActionGrid::default();
    let levels: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
    let expected: BTreeSet<(u64, u64)> = levels
        .iter()
        .flat_map(|a| levels.iter().map(move |p| (a.to_bits(), p.to_bits())))
        .collect();
    let decoded: Vec<(u64, u64)> = (0..25)
        .map(|i| action_decode(i, &grid).unwrap())
        .map(|a| (a.retail.to_bits(), a.purchase.to_bits()))
        .collect();
    let distinct: BTreeSet<_> = decoded.iter().copied().collect();
    let ok = grid.len() == 25 && distinct.len() == 25 && distinct == expected && action_decode(25, &grid).is_err();
    assert!(verdict(
        "C9",
        "25-action grid",
        ok,
        format!("{} distinct pairs", distinct.len())
    ));
}
