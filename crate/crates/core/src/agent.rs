//! Deep Q-learning over a discrete action set: epsilon-greedy behavior,
//! TD targets from a periodically synced frozen copy, minibatch updates.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{VehicleEnv, VehicleState};
use crate::error::{Error, Result};
use crate::mlp::{mlp_specs, Network, Optimizer, UpdateRule};
use crate::penalty::{PenaltyKind, ScheduleEvent};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of training episodes over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    pub batch_size: usize,
    /// Online-to-target copy period, in updates.
    pub sync_period: u64,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.5,
            batch_size: 64,
            sync_period: 200,
            lr: 1e-3,
            hidden: vec![64, 64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.eps_start) || !unit(self.eps_end) {
            return Err(Error::Config("gamma and epsilon must lie in [0, 1]".into()));
        }
        if !(self.eps_decay_fraction >= 0.0 && self.eps_decay_fraction <= 1.0) {
            return Err(Error::Config("eps_decay_fraction must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.sync_period == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("batch_size, sync_period and lr must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Linear decay from `eps_start` to `eps_end` over the first
    /// `eps_decay_fraction` of `total` episodes, constant afterwards.
    pub fn epsilon(&self, episode: usize, total: usize) -> f64 {
        let horizon = self.eps_decay_fraction * total as f64;
        if horizon <= 0.0 || episode as f64 >= horizon {
            return self.eps_end;
        }
        let frac = episode as f64 / horizon;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Anything that picks an action index for a vehicle state.
pub trait Policy {
    fn act(&self, state: VehicleState) -> usize;
}

impl<F: Fn(VehicleState) -> usize> Policy for F {
    fn act(&self, state: VehicleState) -> usize {
        self(state)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    online: Network,
    target: Network,
    optimizer: Optimizer,
    updates: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        num_actions: usize,
        config: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let online = Network::init(&mlp_specs(state_dim, &config.hidden, num_actions), rng)?;
        Self::with_network(online, config)
    }

    pub fn with_network(online: Network, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Optimizer::new(UpdateRule::adam(config.lr), &online);
        Ok(Self { target: online.clone(), online, optimizer, config, updates: 0 })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_width()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// Epsilon-greedy choice. One uniform draw decides exploration; a
    /// second draws the random action only when exploring.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if rng.gen::<f64>() < epsilon {
            Ok(rng.gen_range(0..self.num_actions()))
        } else {
            self.greedy(state)
        }
    }

    /// `r` for terminal transitions, `r + gamma * max_a Q_target(s', a)`
    /// otherwise.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let live: Vec<&Transition> = batch.iter().copied().filter(|t| !t.terminal).collect();
        let mut bootstrap = Vec::with_capacity(live.len());
        if !live.is_empty() {
            let dim = self.target.input_width();
            let mut next = Array2::zeros((live.len(), dim));
            for (i, t) in live.iter().enumerate() {
                if t.next_state.len() != dim {
                    return Err(Error::Shape { expected: dim, got: t.next_state.len() });
                }
                next.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state[..]));
            }
            let q = self.target.forward_batch(next.view())?;
            bootstrap.extend(q.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, &v| m.max(v))));
        }
        let mut live_q = bootstrap.into_iter();
        Ok(batch
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + self.config.gamma * live_q.next().expect("one per live transition")
                }
            })
            .collect())
    }

    /// One minibatch update on `batch`. Returns the pre-update loss.
    pub fn update_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = self.td_targets(batch)?;
        let dim = self.online.input_width();
        let mut states = Array2::zeros((batch.len(), dim));
        let mut actions = Vec::with_capacity(batch.len());
        for (i, t) in batch.iter().enumerate() {
            if t.state.len() != dim {
                return Err(Error::Shape { expected: dim, got: t.state.len() });
            }
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state[..]));
            actions.push(t.action);
        }
        let (grads, loss) = self.online.backward_selected(states.view(), &actions, &targets)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { update: self.updates, reason: "non-finite loss".into() });
        }
        self.optimizer.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates % self.config.sync_period == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Sample a minibatch, update, and report the loss to the penalty
    /// schedule.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        penalty: &mut PenaltyKind,
        rng: &mut R,
    ) -> Result<(f64, ScheduleEvent)> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        let loss = self.update_on(&batch)?;
        Ok((loss, penalty.observe_loss(loss)))
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

impl Policy for Agent {
    fn act(&self, state: VehicleState) -> usize {
        self.greedy(&state.to_array()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEval {
    /// Sum of unpenalized stage costs.
    pub cost: f64,
    /// Visited states (initial included) with any residual above zero.
    pub violations: usize,
    pub states: Vec<VehicleState>,
    pub actions: Vec<usize>,
}

/// Exploration-free rollouts of `env.horizon` steps from each start.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    env: &VehicleEnv,
    initial: &[VehicleState],
) -> Vec<TrajectoryEval> {
    initial
        .iter()
        .map(|&start| {
            let mut s = start;
            let mut cost = 0.0;
            let mut violations = usize::from(env.is_violated(s));
            let mut states = vec![s];
            let mut actions = Vec::with_capacity(env.horizon);
            for _ in 0..env.horizon {
                let a = policy.act(s);
                let out = env.step(s, a);
                cost += out.cost;
                s = out.next;
                violations += usize::from(env.is_violated(s));
                states.push(s);
                actions.push(a);
            }
            TrajectoryEval { cost, violations, states, actions }
        })
        .collect()
}
