use microgrid_pricing::agent::{select_action, td_targets, train, AgentConfig, DqnAgent, TargetRule};
use microgrid_pricing::env::{EnvConfig, MicrogridEnv, Transition};
use microgrid_pricing::lab::{summarize, ExperimentConfig};
use microgrid_pricing::qnet::{grad, loss, sgd_update, NetConfig, NetParams, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_env(episode_length: usize) -> EnvConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.env.episode_length = episode_length;
    cfg.env_config(cfg.customers().unwrap())
}

fn quick_agent(seed: u64) -> AgentConfig {
    AgentConfig {
        total_steps: 1500,
        learn_start: 300,
        replay_capacity: 1000,
        target_sync: 200,
        seed,
        ..AgentConfig::default()
    }
}

fn rollout(cfg: &EnvConfig, seed: u64, actions: &[usize]) -> Vec<String> {
    let mut env = MicrogridEnv::new(cfg.clone()).unwrap();
    env.reset(seed);
    actions
        .iter()
        .map(|&a| serde_json::to_string(&env.step(a).unwrap()).unwrap())
        .collect()
}

#[test]
fn rollouts_replay_bit_for_bit() {
    let cfg = small_env(500);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let actions: Vec<usize> = (0..500).map(|_| rng.random_range(0..25)).collect();
    assert_eq!(rollout(&cfg, 4, &actions), rollout(&cfg, 4, &actions));
}

#[test]
fn episode_ends_and_rejects_further_steps() {
    let cfg = small_env(48);
    let mut env = MicrogridEnv::new(cfg).unwrap();
    env.reset(0);
    let mut dones = 0;
    for _ in 0..48 {
        let (t, _) = env.step(20).unwrap();
        dones += t.done as usize;
    }
    assert_eq!(dones, 1);
    assert!(env.is_done());
    assert!(env.step(0).is_err());
}

#[test]
fn training_is_seed_deterministic() {
    let env = small_env(600);
    let a = train(&env, &quick_agent(5)).unwrap();
    let b = train(&env, &quick_agent(5)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.stats.steps, b.stats.steps);
    let c = train(&env, &quick_agent(6)).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn training_records_every_step_and_warms_up() {
    let env = small_env(600);
    let cfg = quick_agent(1);
    let out = train(&env, &cfg).unwrap();
    assert_eq!(out.stats.rewards().count(), cfg.total_steps);
    for s in &out.stats.steps {
        // memory holds `step` transitions when the learning phase runs
        assert_eq!(s.loss.is_some(), s.step >= cfg.learn_start, "step {}", s.step);
    }
    assert_eq!(out.stats.episodes.len(), cfg.total_steps.div_ceil(600));
    assert!((out.stats.final_epsilon() - 0.05).abs() < 1e-12);
}

#[test]
fn summary_weights_recombine_into_operation_cost() {
    let env = small_env(600);
    let out = train(&env, &quick_agent(2)).unwrap();
    let s = summarize("t", 2, &env, &out.stats, 0.0);
    let (alpha, beta) = (s.alpha, s.beta);
    let recombined = (1.0 - alpha - beta) * -s.avg_sp_profit
        + alpha * s.consumers as f64 * -s.avg_consumer_profit
        + beta * s.prosumers as f64 * -s.avg_prosumer_profit;
    assert!(
        (recombined - s.avg_operation_cost).abs() <= 1e-9,
        "{recombined} vs {}",
        s.avg_operation_cost
    );
    assert!((s.avg_reward + s.avg_operation_cost).abs() <= 1e-12);
}

#[test]
fn uniform_exploration_at_full_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = [0.0; 25];
    let draws = 100_000;
    let mut counts = [0usize; 25];
    for _ in 0..draws {
        counts[select_action(&q, 1.0, &mut rng)] += 1;
    }
    let p = 1.0 / 25.0;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - expected).abs() <= 3.0 * sigma, "action {i}: {c}");
    }
}

#[test]
fn greedy_selection_picks_lowest_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut q = vec![0.0; 25];
    q[7] = 2.0;
    q[19] = 2.0;
    assert!((0..100).all(|_| select_action(&q, 0.0, &mut rng) == 7));
}

fn random_transition(rng: &mut ChaCha8Rng, done: bool) -> Transition {
    let mut env = MicrogridEnv::new(small_env(24)).unwrap();
    env.reset(0);
    let (mut t, _) = env.step(rng.random_range(0..25)).unwrap();
    t.reward = rng.random_range(-5.0..5.0);
    t.next_state.features = [rng.random(), rng.random(), rng.random()];
    t.done = done;
    t
}

#[test]
fn td_targets_match_hand_computation() {
    let net_cfg = NetConfig {
        hidden: vec![8],
        output_size: 25,
        ..NetConfig::default()
    };
    let target = NetParams::init(&net_cfg, 1);
    let online = NetParams::init(&net_cfg, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch: Vec<Transition> = (0..6).map(|i| random_transition(&mut rng, i == 0)).collect();
    let gamma = 0.99;

    let vanilla = td_targets(&batch, &target, gamma, TargetRule::Vanilla, &online);
    let double = td_targets(&batch, &target, gamma, TargetRule::Double, &online);
    assert_eq!(vanilla[0], batch[0].reward);
    assert_eq!(double[0], batch[0].reward);
    for (i, tr) in batch.iter().enumerate().skip(1) {
        let qt = target.forward(&tr.next_state.features);
        let qo = online.forward(&tr.next_state.features);
        let max = qt.iter().copied().fold(f64::MIN, f64::max);
        let pick = (0..25).fold(0, |b, j| if qo[j] > qo[b] { j } else { b });
        assert!((vanilla[i] - (tr.reward + gamma * max)).abs() < 1e-12);
        assert!((double[i] - (tr.reward + gamma * qt[pick])).abs() < 1e-12);
    }
}

#[test]
fn learning_waits_for_memory_and_target_syncs_on_interval() {
    let env_cfg = small_env(200);
    let cfg = AgentConfig {
        learn_start: 50,
        minibatch: 8,
        target_sync: 30,
        ..quick_agent(0)
    };
    let mut agent = DqnAgent::new(cfg.clone(), 25);
    let mut env = MicrogridEnv::new(env_cfg).unwrap();
    let mut obs = env.reset(0);
    let initial = agent.online.clone();
    for step in 1..=120usize {
        let a = agent.act(&obs.features, 1.0);
        let (t, _) = env.step(a).unwrap();
        obs = t.next_state;
        agent.remember(t);
        let before = agent.target.clone();
        match agent.learn_step() {
            None => {
                assert!(step < 50);
                assert_eq!(agent.online, initial);
            }
            Some(l) => {
                assert!(l.is_finite());
                let synced = agent.sync_target(step);
                assert_eq!(synced, step % 30 == 0);
                if synced {
                    assert_eq!(agent.target, agent.online);
                } else {
                    assert_eq!(agent.target, before);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn small_sgd_step_does_not_raise_loss(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net_cfg = NetConfig { hidden: vec![16, 16], output_size: 25, ..NetConfig::default() };
        let mut net = NetParams::init(&net_cfg, seed);
        let inputs: Vec<[f64; 3]> = (0..32).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let batch: Vec<Sample> = inputs
            .iter()
            .map(|x| Sample { input: x, action: rng.random_range(0..25), target: rng.random_range(-3.0..3.0) })
            .collect();
        let (g, before) = grad(&net, &batch);
        sgd_update(&mut net, &g, 1e-4);
        prop_assert!(loss(&net, &batch) <= before + 1e-12);
    }
}
