//! Deep Q-learning over the pricing environment: epsilon-greedy sampling,
//! uniform replay, TD targets from a periodically synchronized target
//! network, and one SGD step per environment step once warm-up is over.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, MicrogridEnv, TrajectoryRow, Transition, OBSERVATION_SIZE};
use crate::error::{ConfigError, EnvError};
use crate::qnet::{grad_into, sgd_update, GradWorkspace, NetConfig, NetParams, Sample, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetRule {
    /// `r + gamma * max_a' Qhat(s', a')`
    Vanilla,
    /// `r + gamma * Qhat(s', argmax_a' Q(s', a'))`
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub minibatch: usize,
    /// Stored transitions required before the first update.
    pub learn_start: usize,
    pub replay_capacity: usize,
    pub total_steps: usize,
    pub target_sync: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `total_steps` over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub target_rule: TargetRule,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            minibatch: 32,
            learn_start: 1000,
            replay_capacity: 10_000,
            total_steps: 100_000,
            target_sync: 1000,
            learning_rate: 0.001,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            target_rule: TargetRule::Vanilla,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(format!("agent: {m}")));
        if self.minibatch == 0 || self.minibatch > self.replay_capacity {
            return bad("need 1 <= minibatch <= replay_capacity");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start)
            || !unit.contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return bad("epsilon bounds must satisfy 0 <= end <= start <= 1");
        }
        if !unit.contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must lie in [0, 1]");
        }
        self.net_config(1).validate()
    }

    pub fn net_config(&self, actions: usize) -> NetConfig {
        NetConfig {
            input_size: OBSERVATION_SIZE,
            hidden: self.hidden.clone(),
            output_size: actions,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }

    fn decay_steps(&self) -> f64 {
        self.total_steps as f64 * self.epsilon_decay_fraction
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the decay window,
/// flat afterwards. `step` counts from 0.
pub fn epsilon_at(step: usize, cfg: &AgentConfig) -> f64 {
    let window = cfg.decay_steps();
    let s = step as f64;
    if s >= window {
        cfg.epsilon_end
    } else {
        cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * s / window
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn select_action<R: Rng>(qvalues: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..qvalues.len())
    } else {
        argmax(qvalues)
    }
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            next: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<Transition> {
        (0..k)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// Regression targets for a batch of transitions.
pub fn td_targets(
    batch: &[Transition],
    target: &NetParams,
    gamma: f64,
    rule: TargetRule,
    online: &NetParams,
) -> Vec<f64> {
    let mut t_trace = Trace::new(target);
    let mut o_trace = Trace::new(online);
    batch
        .iter()
        .map(|tr| {
            if tr.done {
                return tr.reward;
            }
            target.forward_trace(&tr.next_state.features, &mut t_trace);
            let q_next = t_trace.output();
            let bootstrap = match rule {
                TargetRule::Vanilla => q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                TargetRule::Double => {
                    online.forward_trace(&tr.next_state.features, &mut o_trace);
                    q_next[argmax(o_trace.output())]
                }
            };
            tr.reward + gamma * bootstrap
        })
        .collect()
}

/// Online network, target network, replay memory and the agent's RNG.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub cfg: AgentConfig,
    pub net_cfg: NetConfig,
    pub online: NetParams,
    pub target: NetParams,
    pub memory: ReplayMemory,
    rng: ChaCha8Rng,
    ws: GradWorkspace,
    trace: Trace,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, actions: usize) -> Self {
        let net_cfg = cfg.net_config(actions);
        let online = NetParams::init(&net_cfg, cfg.seed);
        let target = online.clone();
        let ws = GradWorkspace::new(&online);
        let trace = Trace::new(&online);
        Self {
            memory: ReplayMemory::new(cfg.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED)),
            net_cfg,
            online,
            target,
            ws,
            trace,
            cfg,
        }
    }

    pub fn act(&mut self, features: &[f64], epsilon: f64) -> usize {
        self.online.forward_trace(features, &mut self.trace);
        let q = self.trace.output();
        select_action(q, epsilon, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    /// One learning phase; `None` while the memory is still warming up.
    pub fn learn_step(&mut self) -> Option<f64> {
        if self.memory.len() < self.cfg.learn_start.max(self.cfg.minibatch) {
            return None;
        }
        let batch = self.memory.sample(self.cfg.minibatch, &mut self.rng);
        let targets = td_targets(&batch, &self.target, self.cfg.gamma, self.cfg.target_rule, &self.online);
        let samples: Vec<Sample> = batch
            .iter()
            .zip(&targets)
            .map(|(tr, &y)| Sample {
                input: &tr.state.features,
                action: tr.action,
                target: y,
            })
            .collect();
        let loss = grad_into(&self.online, &samples, &mut self.ws);
        sgd_update(&mut self.online, &self.ws.grads, self.cfg.learning_rate);
        Some(loss)
    }

    /// Copies online into target when `step` is a multiple of the interval.
    pub fn sync_target(&mut self, step: usize) -> bool {
        sync_target(&self.online, &mut self.target, step, self.cfg.target_sync)
    }
}

pub fn sync_target(online: &NetParams, target: &mut NetParams, step: usize, interval: usize) -> bool {
    if step.is_multiple_of(interval) {
        target.clone_from(online);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Global step, counting from 1.
    pub step: usize,
    pub episode: usize,
    pub epsilon: f64,
    pub action: usize,
    pub loss: Option<f64>,
    pub trajectory: TrajectoryRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub first_step: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainStats {
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.trajectory.reward)
    }

    /// `(step, loss)` for every learning phase that ran.
    pub fn losses(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.steps.iter().filter_map(|s| s.loss.map(|l| (s.step, l)))
    }

    pub fn final_epsilon(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.epsilon)
    }

    /// The last `window` step records (all of them if fewer).
    pub fn tail(&self, window: usize) -> &[StepRecord] {
        &self.steps[self.steps.len().saturating_sub(window)..]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub net_cfg: NetConfig,
    pub stats: TrainStats,
}

/// Runs `total_steps` environment steps over back-to-back episodes, learning
/// after every step once warm-up is done.
pub fn train(env_cfg: &EnvConfig, agent_cfg: &AgentConfig) -> Result<TrainOutcome, EnvError> {
    agent_cfg.validate()?;
    let mut env = MicrogridEnv::new(env_cfg.clone())?;
    let mut agent = DqnAgent::new(agent_cfg.clone(), env_cfg.grid.len());
    let mut stats = TrainStats {
        steps: Vec::with_capacity(agent_cfg.total_steps),
        episodes: Vec::new(),
    };

    let mut obs = env.reset(agent_cfg.seed);
    let mut episode = 0;
    let mut episode_start = 1;
    let mut episode_reward = 0.0;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);

    for step in 1..=agent_cfg.total_steps {
        let epsilon = epsilon_at(step - 1, agent_cfg);
        let action = agent.act(&obs.features, epsilon);
        let (transition, result) = env.step(action)?;
        agent.remember(transition);

        let loss = agent.learn_step();
        if loss.is_some() {
            agent.sync_target(step);
        }

        if let Some(l) = loss {
            loss_sum += l;
            loss_n += 1;
        }
        episode_reward += result.reward;
        stats.steps.push(StepRecord {
            step,
            episode,
            epsilon,
            action,
            loss,
            trajectory: TrajectoryRow::from(&result),
        });

        let last = step == agent_cfg.total_steps;
        if transition.done || last {
            stats.episodes.push(EpisodeRecord {
                episode,
                first_step: episode_start,
                steps: step + 1 - episode_start,
                total_reward: episode_reward,
                mean_loss: (loss_n > 0).then(|| loss_sum / loss_n as f64),
            });
            episode += 1;
            episode_start = step + 1;
            episode_reward = 0.0;
            (loss_sum, loss_n) = (0.0, 0);
        }
        obs = if transition.done {
            env.reset(agent_cfg.seed)
        } else {
            transition.next_state
        };
    }

    Ok(TrainOutcome {
        params: agent.online,
        net_cfg: agent.net_cfg,
        stats,
    })
}
