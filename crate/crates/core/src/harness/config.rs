use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::envs::{Integrator, VehicleEnv, VehicleState};
use crate::error::{Error, Result};
use crate::penalty::{PenaltyKind, ScheduleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Regress1d,
    Vehicle,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Regress1d => "regress1d",
            Study::Vehicle => "vehicle",
        }
    }

    pub fn default_episodes(self) -> usize {
        match self {
            Study::Regress1d => 500,
            Study::Vehicle => 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyChoice {
    Uniform,
    Linear,
    Dynamic,
}

impl PenaltyChoice {
    pub const ALL: [PenaltyChoice; 3] = [PenaltyChoice::Uniform, PenaltyChoice::Linear, PenaltyChoice::Dynamic];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyChoice::Uniform => "uniform",
            PenaltyChoice::Linear => "linear",
            PenaltyChoice::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for PenaltyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "linear" => Ok(Self::Linear),
            "dynamic" => Ok(Self::Dynamic),
            other => Err(Error::Config(format!("unknown penalty kind {other:?}"))),
        }
    }
}

/// Penalty parameters. Unset values take the study's defaults:
/// level/factor 50 and mu 0.1..50 for the regression study, level/factor 20
/// and mu 0.05..20 for the vehicle study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyChoice,
    pub level: Option<f64>,
    pub factor: Option<f64>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub growth: f64,
    pub alpha: f64,
    pub window: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            kind: PenaltyChoice::Dynamic,
            level: None,
            factor: None,
            mu_min: None,
            mu_max: None,
            growth: 2.0,
            alpha: 60.0,
            window: 1,
        }
    }
}

impl PenaltyConfig {
    fn fill(&mut self, study: Study) {
        let (size, mu_min) = match study {
            Study::Regress1d => (50.0, 0.1),
            Study::Vehicle => (20.0, 0.05),
        };
        self.level.get_or_insert(size);
        self.factor.get_or_insert(size);
        self.mu_min.get_or_insert(mu_min);
        self.mu_max.get_or_insert(size);
    }

    pub fn schedule(&self, study: Study) -> ScheduleParams {
        let mut c = self.clone();
        c.fill(study);
        ScheduleParams {
            mu_min: c.mu_min.unwrap_or_default(),
            mu_max: c.mu_max.unwrap_or_default(),
            growth: c.growth,
            alpha: c.alpha,
            window: c.window,
        }
    }

    pub fn build(&self, study: Study) -> Result<PenaltyKind> {
        let mut c = self.clone();
        c.fill(study);
        match c.kind {
            PenaltyChoice::Uniform => PenaltyKind::uniform(c.level.unwrap_or_default()),
            PenaltyChoice::Linear => PenaltyKind::linear(c.factor.unwrap_or_default()),
            PenaltyChoice::Dynamic => PenaltyKind::dynamic(c.schedule(study)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub rho: f64,
    pub horizon: usize,
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { rho: 50.0, horizon: 20, dt: 1.0, integrator: Integrator::Euler }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<VehicleEnv> {
        if !(self.rho > 0.0) || self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::Config("env needs rho > 0, horizon >= 1, dt > 0".into()));
        }
        Ok(VehicleEnv::new(self.rho, self.horizon, self.dt, self.integrator))
    }
}

/// Evaluation starts: `{-0.5, 0, 0.5} x {-0.2, 0, 0.2}`.
pub fn default_eval_states() -> Vec<[f64; 2]> {
    let mut v = Vec::with_capacity(9);
    for x1 in [-0.5, 0.0, 0.5] {
        for x2 in [-0.2, 0.0, 0.2] {
            v.push([x1, x2]);
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleTrainConfig {
    pub replay_capacity: usize,
    pub updates_per_step: usize,
    pub eval_every: usize,
    pub cost_threshold: f64,
    pub eval_states: Vec<[f64; 2]>,
}

impl Default for VehicleTrainConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 10_000,
            updates_per_step: 1,
            eval_every: 100,
            cost_threshold: 4.0,
            eval_states: default_eval_states(),
        }
    }
}

impl VehicleTrainConfig {
    pub fn initial_states(&self) -> Vec<VehicleState> {
        self.eval_states.iter().map(|&[a, b]| VehicleState::new(a, b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressConfig {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub grid_points: usize,
    pub curve_episodes: Vec<usize>,
    /// Episodes averaged for the final-loss statistic.
    pub tail_episodes: usize,
    /// Half-width of the interior band `[-b, b]` used for the bias statistic.
    pub interior_bound: f64,
    /// Recompute buffered targets with the current penalty at sampling time
    /// instead of keeping the value stored when the point was drawn.
    pub relabel: bool,
    pub optimizer: OptimizerChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl OptimizerChoice {
    pub fn rule(self, lr: f64) -> crate::mlp::UpdateRule {
        match self {
            OptimizerChoice::Adam => crate::mlp::UpdateRule::adam(lr),
            OptimizerChoice::Sgd => crate::mlp::UpdateRule::Sgd { lr },
        }
    }
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 10_000,
            batch_size: 64,
            lr: 1e-4,
            hidden: vec![64, 64, 64],
            grid_points: 1001,
            curve_episodes: vec![50, 150, 500],
            tail_episodes: 100,
            interior_bound: 4.5,
            relabel: false,
            optimizer: OptimizerChoice::Sgd,
        }
    }
}

/// One run. Only `study` and `seed` matter; everything else has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    pub seed: u64,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
    pub penalty: PenaltyConfig,
    pub agent: AgentConfig,
    pub env: EnvConfig,
    pub vehicle: VehicleTrainConfig,
    pub regress: RegressConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(Study::Vehicle, 0)
    }
}

impl RunConfig {
    pub fn new(study: Study, seed: u64) -> Self {
        Self {
            study,
            seed,
            episodes: None,
            out: None,
            penalty: PenaltyConfig::default(),
            agent: AgentConfig::default(),
            env: EnvConfig::default(),
            vehicle: VehicleTrainConfig::default(),
            regress: RegressConfig::default(),
        }
    }

    pub fn with_penalty(mut self, kind: PenaltyChoice) -> Self {
        self.penalty.kind = kind;
        self
    }

    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.episodes = Some(episodes);
        self
    }

    pub fn episodes(&self) -> usize {
        self.episodes.unwrap_or_else(|| self.study.default_episodes())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Copy with every optional field filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.episodes = Some(self.episodes());
        c.penalty.fill(self.study);
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes() == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        self.penalty.build(self.study)?;
        match self.study {
            Study::Vehicle => {
                self.agent.validate()?;
                self.env.build()?;
                let v = &self.vehicle;
                if v.replay_capacity == 0 || v.eval_every == 0 || v.eval_states.is_empty() {
                    return Err(Error::Config(
                        "vehicle needs replay_capacity, eval_every and eval_states".into(),
                    ));
                }
            }
            Study::Regress1d => {
                let r = &self.regress;
                if r.replay_capacity == 0 || r.batch_size == 0 || !(r.lr > 0.0) || r.grid_points < 2 {
                    return Err(Error::Config("invalid regression settings".into()));
                }
            }
        }
        Ok(())
    }
}
