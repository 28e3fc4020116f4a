use rand::SeedableRng;

use super::config::{RunConfig, Study};
use super::record::{EvalBlock, EpisodeLog, RunRecord, RunStatus};
use crate::agent::{evaluate_policy, Agent};
use crate::envs::{reward, sample_initial, ActionGrid};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::SeededRng;

#[derive(Debug, Clone)]
pub struct VehicleOutcome {
    pub record: RunRecord,
    pub agent: Agent,
}

/// Epsilon-greedy DQN training with an exploration-free evaluation every
/// `eval_every` episodes.
pub fn run_vehicle(config: &RunConfig) -> Result<VehicleOutcome> {
    if config.study != Study::Vehicle {
        return Err(Error::Config("run_vehicle needs study = vehicle".into()));
    }
    config.validate()?;
    let vc = &config.vehicle;
    let episodes = config.episodes();
    let env = config.env.build()?;
    let eval_states = vc.initial_states();
    let mut penalty = config.penalty.build(config.study)?;
    let mut rng = SeededRng::seed_from_u64(config.seed);
    let mut agent = Agent::new(2, ActionGrid::LEN, config.agent.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(vc.replay_capacity)?;
    let mut record = RunRecord::new(config.study, penalty.name(), config.seed, episodes);

    'episodes: for episode in 1..=episodes {
        let epsilon = agent.config().epsilon(episode - 1, episodes);
        let mut state = sample_initial(&mut rng);
        let (mut loss_sum, mut updates) = (0.0, 0usize);
        for t in 0..env.horizon {
            let action = agent.select_action(&state.to_array(), epsilon, &mut rng)?;
            let out = env.step(state, action);
            buffer.push(Transition {
                state: state.to_array().to_vec(),
                action,
                reward: reward(out.cost, out.ks, &penalty),
                next_state: out.next.to_array().to_vec(),
                terminal: t + 1 == env.horizon,
            });
            state = out.next;
            for _ in 0..vc.updates_per_step {
                match agent.train_step(&buffer, &mut penalty, &mut rng) {
                    Ok((loss, _)) => {
                        loss_sum += loss;
                        updates += 1;
                    }
                    Err(e) => {
                        record.status = RunStatus::Diverged { episode, reason: e.to_string() };
                        break 'episodes;
                    }
                }
            }
        }
        let mean_loss = if updates > 0 { loss_sum / updates as f64 } else { 0.0 };
        record.losses.push(EpisodeLog { episode, mean_loss, mu: penalty.mu() });

        if episode % vc.eval_every == 0 {
            let evals = evaluate_policy(&agent, &env, &eval_states);
            let scores: Vec<(f64, usize)> = evals.iter().map(|e| (e.cost, e.violations)).collect();
            record.push_eval(EvalBlock::new(episode, &scores, vc.cost_threshold));
        }
    }
    Ok(VehicleOutcome { record, agent })
}
