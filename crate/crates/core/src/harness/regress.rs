use ndarray::Array2;
use rand::SeedableRng;

use super::config::{RunConfig, Study};
use super::record::{CurveSet, EpisodeLog, RunRecord, RunStatus};
use crate::envs::RegressionTarget;
use crate::error::{Error, Result};
use crate::mlp::{mlp_specs, Network, Optimizer};
use crate::replay::{ReplayBuffer, Transition};
use crate::SeededRng;

#[derive(Debug, Clone)]
pub struct RegressOutcome {
    pub record: RunRecord,
    pub network: Network,
    pub curves: CurveSet,
}

/// Evenly spaced grid of `points` values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + step * i as f64 }).collect()
}

fn predict(net: &Network, xs: &[f64]) -> Result<Vec<f64>> {
    let input = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).expect("column vector");
    Ok(net.forward_batch(input.view())?.column(0).to_vec())
}

/// Largest |prediction - unpenalized objective| over `[-bound, bound]`.
pub fn interior_max_error(net: &Network, bound: f64, points: usize) -> Result<f64> {
    let xs = linspace(-bound, bound, points);
    let ys = predict(net, &xs)?;
    Ok(xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - RegressionTarget::objective(x)).abs())
        .fold(0.0, f64::max))
}

/// Each episode samples fresh points into the buffer, then makes one
/// minibatch update whose loss drives the penalty schedule.
pub fn run_regress1d(config: &RunConfig) -> Result<RegressOutcome> {
    if config.study != Study::Regress1d {
        return Err(Error::Config("run_regress1d needs study = regress1d".into()));
    }
    config.validate()?;
    let rc = &config.regress;
    let episodes = config.episodes();
    let target = RegressionTarget::default();
    let mut penalty = config.penalty.build(config.study)?;
    let mut rng = SeededRng::seed_from_u64(config.seed);
    let mut net = Network::init(&mlp_specs(1, &rc.hidden, 1), &mut rng)?;
    let mut opt = Optimizer::new(rc.optimizer.rule(rc.lr), &net);
    let mut buffer = ReplayBuffer::new(rc.replay_capacity)?;
    let mut record = RunRecord::new(config.study, penalty.name(), config.seed, episodes);
    let xs = linspace(target.sample_low, target.sample_high, rc.grid_points);
    let mut curves = CurveSet { xs, snapshots: Vec::new() };

    for episode in 1..=episodes {
        for (x, r) in target.sample_episode(&penalty, &mut rng) {
            buffer.push(Transition::regression(x, r));
        }
        let batch = buffer.sample(rc.batch_size, &mut rng)?;
        let inputs = Array2::from_shape_fn((batch.len(), 1), |(i, _)| batch[i].state[0]);
        let targets = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
            if rc.relabel {
                target.value(batch[i].state[0], &penalty)
            } else {
                batch[i].reward
            }
        });
        let step = net
            .backward(inputs.view(), targets.view())
            .and_then(|(grads, loss)| {
                if !loss.is_finite() {
                    return Err(Error::Diverged { update: opt.steps(), reason: "non-finite loss".into() });
                }
                opt.step(&mut net, &grads).map(|_| loss)
            });
        let loss = match step {
            Ok(loss) => loss,
            Err(e) => {
                record.status = RunStatus::Diverged { episode, reason: e.to_string() };
                break;
            }
        };
        penalty.observe_loss(loss);
        record.losses.push(EpisodeLog { episode, mean_loss: loss, mu: penalty.mu() });
        if rc.curve_episodes.contains(&episode) {
            curves.snapshots.push((episode, predict(&net, &curves.xs)?));
        }
    }

    let tail = rc.tail_episodes.min(record.losses.len());
    if tail > 0 {
        let tail_losses = &record.losses[record.losses.len() - tail..];
        record.final_tail_loss =
            Some(tail_losses.iter().map(|e| e.mean_loss).sum::<f64>() / tail as f64);
    }
    record.interior_max_error = Some(interior_max_error(&net, rc.interior_bound, rc.grid_points)?);
    Ok(RegressOutcome { record, network: net, curves })
}
