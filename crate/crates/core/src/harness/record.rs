use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Study};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Mean minibatch loss over the episode's updates.
    pub mean_loss: f64,
    /// Penalty factor in effect at the end of the episode.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub init_idx: usize,
    pub cost: f64,
    pub violations: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBlock {
    pub episode: usize,
    pub trajectories: Vec<TrajectoryScore>,
    pub pass: bool,
    pub mean_cost: f64,
    pub worst_cost: f64,
}

impl EvalBlock {
    pub fn new(episode: usize, costs_and_violations: &[(f64, usize)], threshold: f64) -> Self {
        let trajectories: Vec<TrajectoryScore> = costs_and_violations
            .iter()
            .enumerate()
            .map(|(init_idx, &(cost, violations))| TrajectoryScore {
                init_idx,
                cost,
                violations,
                pass: violations == 0 && cost <= threshold,
            })
            .collect();
        let n = trajectories.len().max(1) as f64;
        let mean_cost = trajectories.iter().map(|t| t.cost).sum::<f64>() / n;
        let worst_cost = trajectories.iter().map(|t| t.cost).fold(f64::NEG_INFINITY, f64::max);
        let pass = is_sufficient_feasible(&trajectories, threshold);
        Self { episode, trajectories, pass, mean_cost, worst_cost }
    }
}

/// True iff every trajectory is violation-free with total cost at most
/// `threshold` (inclusive).
pub fn is_sufficient_feasible(trajectories: &[TrajectoryScore], threshold: f64) -> bool {
    !trajectories.is_empty()
        && trajectories.iter().all(|t| t.violations == 0 && t.cost <= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged { episode: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub study: Study,
    pub kind: String,
    pub seed: u64,
    pub episodes_planned: usize,
    pub losses: Vec<EpisodeLog>,
    pub evals: Vec<EvalBlock>,
    pub status: RunStatus,
    /// First evaluation episode whose block passed.
    pub first_pass_episode: Option<usize>,
    /// Lowest mean cost over passing blocks.
    pub best_pass_cost: Option<f64>,
    /// Mean loss over the final `tail_episodes` (regression study).
    pub final_tail_loss: Option<f64>,
    /// Max |prediction - objective| over the interior band (regression study).
    pub interior_max_error: Option<f64>,
}

impl RunRecord {
    pub fn new(study: Study, kind: &str, seed: u64, episodes_planned: usize) -> Self {
        Self {
            study,
            kind: kind.to_string(),
            seed,
            episodes_planned,
            losses: Vec::with_capacity(episodes_planned),
            evals: Vec::new(),
            status: RunStatus::Completed,
            first_pass_episode: None,
            best_pass_cost: None,
            final_tail_loss: None,
            interior_max_error: None,
        }
    }

    pub fn push_eval(&mut self, block: EvalBlock) {
        if block.pass {
            self.first_pass_episode.get_or_insert(block.episode);
            let best = self.best_pass_cost.map_or(block.mean_cost, |c| c.min(block.mean_cost));
            self.best_pass_cost = Some(best);
        }
        self.evals.push(block);
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("episode,mean_loss,mu\n");
        for e in &self.losses {
            writeln!(s, "{},{},{}", e.episode, e.mean_loss, e.mu).ok();
        }
        s
    }

    pub fn eval_csv(&self) -> String {
        let mut s = String::from("episode,init_idx,cost,violations,pass\n");
        for b in &self.evals {
            for t in &b.trajectories {
                writeln!(s, "{},{},{},{},{}", b.episode, t.init_idx, t.cost, t.violations, t.pass).ok();
            }
        }
        s
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("record.json"))?;
        serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
    }
}

/// Fitted curves on the evaluation grid, one column per snapshot episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub xs: Vec<f64>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl CurveSet {
    pub fn to_csv(&self, truth: impl Fn(f64) -> f64) -> String {
        let mut s = String::from("x,target");
        for (ep, _) in &self.snapshots {
            write!(s, ",ep{ep}").ok();
        }
        s.push('\n');
        for (i, &x) in self.xs.iter().enumerate() {
            write!(s, "{x},{}", truth(x)).ok();
            for (_, ys) in &self.snapshots {
                write!(s, ",{}", ys[i]).ok();
            }
            s.push('\n');
        }
        s
    }
}

/// Write `config.toml`, `loss.csv`, `record.json`, and `eval.csv` for
/// vehicle runs.
pub fn write_run_dir(dir: &Path, config: &RunConfig, record: &RunRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.resolved().to_toml()?)?;
    fs::write(dir.join("loss.csv"), record.loss_csv())?;
    if record.study == Study::Vehicle {
        fs::write(dir.join("eval.csv"), record.eval_csv())?;
    }
    let json = serde_json::to_string_pretty(record).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("record.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(cost: f64, violations: usize) -> TrajectoryScore {
        TrajectoryScore { init_idx: 0, cost, violations, pass: false }
    }

    #[test]
    fn sufficient_feasible_cases() {
        assert!(is_sufficient_feasible(&[score(0.0, 0), score(0.0, 0)], 4.0));
        assert!(!is_sufficient_feasible(&[score(1.0, 1), score(0.5, 0)], 4.0));
        assert!(is_sufficient_feasible(&[score(4.0, 0), score(1.0, 0)], 4.0));
        assert!(!is_sufficient_feasible(&[score(4.0001, 0)], 4.0));
        assert!(!is_sufficient_feasible(&[], 4.0));
    }

    #[test]
    fn record_tracks_first_and_best_pass() {
        let mut r = RunRecord::new(Study::Vehicle, "dynamic", 1, 300);
        r.push_eval(EvalBlock::new(100, &[(5.0, 0)], 4.0));
        r.push_eval(EvalBlock::new(200, &[(3.0, 0), (2.0, 0)], 4.0));
        r.push_eval(EvalBlock::new(300, &[(1.0, 0), (1.0, 0)], 4.0));
        assert_eq!(r.first_pass_episode, Some(200));
        assert_eq!(r.best_pass_cost, Some(1.0));
        let csv = r.eval_csv();
        assert!(csv.starts_with("episode,init_idx,cost,violations,pass\n"));
        assert_eq!(csv.lines().count(), 1 + 5);
    }
}
