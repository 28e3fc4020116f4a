use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PenaltyChoice, RunConfig, Study};
use super::record::{write_run_dir, RunRecord, RunStatus};
use super::regress::run_regress1d;
use super::vehicle::run_vehicle;
use crate::error::{Error, Result};

/// Published 100-seed results for the vehicle study, kept alongside the
/// reproduced numbers for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    pub seeds: usize,
    pub sufficient_feasible: usize,
    pub average_cost: f64,
    pub checkpoint_counts: Vec<CheckpointCount>,
}

pub fn vehicle_reference(kind: PenaltyChoice) -> ReferenceResult {
    let (count, cost, table) = match kind {
        PenaltyChoice::Uniform => (8, 3.7627, [0, 0, 4, 8]),
        PenaltyChoice::Linear => (5, 3.2835, [0, 0, 0, 5]),
        PenaltyChoice::Dynamic => (28, 3.1988, [0, 1, 16, 28]),
    };
    ReferenceResult {
        seeds: 100,
        sufficient_feasible: count,
        average_cost: cost,
        checkpoint_counts: [500, 1000, 1500, 2000]
            .into_iter()
            .zip(table)
            .map(|(episode, count)| CheckpointCount { episode, count })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointCount {
    pub episode: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatusEntry {
    pub seed: u64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: String,
    pub runs: usize,
    pub diverged: usize,
    pub statuses: Vec<RunStatusEntry>,
    /// Seeds whose greedy policy passed at any checkpoint.
    pub sufficient_feasible: usize,
    /// Mean over passing seeds of their best passing checkpoint cost.
    pub average_cost: Option<f64>,
    pub checkpoint_counts: Vec<CheckpointCount>,
    pub median_tail_loss: Option<f64>,
    pub median_interior_error: Option<f64>,
    pub reference: Option<ReferenceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study: Study,
    pub episodes: usize,
    pub kinds: Vec<KindSummary>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Quarter points of the run length: `{500, 1000, 1500, 2000}` at 2000.
pub fn checkpoints(episodes: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (1..=4).map(|q| episodes * q / 4).filter(|&e| e > 0).collect();
    c.dedup();
    c
}

const KIND_ORDER: [&str; 3] = ["uniform", "linear", "dynamic"];

/// Aggregate finished runs. The result does not depend on input order.
pub fn summarize(study: Study, episodes: usize, records: &[RunRecord]) -> StudySummary {
    let mut kinds: Vec<&str> = records.iter().map(|r| r.kind.as_str()).collect();
    kinds.sort_by_key(|k| KIND_ORDER.iter().position(|o| o == k).unwrap_or(usize::MAX));
    kinds.dedup();
    let marks = checkpoints(episodes);

    let kinds = kinds
        .into_iter()
        .map(|kind| {
            let mut runs: Vec<&RunRecord> = records.iter().filter(|r| r.kind == kind).collect();
            runs.sort_by_key(|r| r.seed);
            let passing: Vec<f64> = runs.iter().filter_map(|r| r.best_pass_cost).collect();
            let checkpoint_counts = marks
                .iter()
                .map(|&episode| CheckpointCount {
                    episode,
                    count: runs
                        .iter()
                        .filter(|r| r.first_pass_episode.is_some_and(|e| e <= episode))
                        .count(),
                })
                .collect();
            let mut tails: Vec<f64> = runs.iter().filter_map(|r| r.final_tail_loss).collect();
            let mut errs: Vec<f64> = runs.iter().filter_map(|r| r.interior_max_error).collect();
            let reference = match study {
                Study::Vehicle => kind.parse().ok().map(vehicle_reference),
                Study::Regress1d => None,
            };
            KindSummary {
                kind: kind.to_string(),
                runs: runs.len(),
                diverged: runs.iter().filter(|r| r.diverged()).count(),
                statuses: runs
                    .iter()
                    .map(|r| RunStatusEntry { seed: r.seed, status: r.status.clone() })
                    .collect(),
                sufficient_feasible: runs.iter().filter(|r| r.first_pass_episode.is_some()).count(),
                average_cost: (!passing.is_empty())
                    .then(|| passing.iter().sum::<f64>() / passing.len() as f64),
                checkpoint_counts,
                median_tail_loss: median(&mut tails),
                median_interior_error: median(&mut errs),
                reference,
            }
        })
        .collect();
    StudySummary { study, episodes, kinds }
}

impl StudySummary {
    pub fn kind(&self, name: &str) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == name)
    }

    pub fn any_diverged(&self) -> bool {
        self.kinds.iter().any(|k| k.diverged > 0)
    }

    pub fn to_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        writeln!(s, "study: {}  episodes: {}", self.study.name(), self.episodes).ok();
        match self.study {
            Study::Vehicle => {
                let marks: Vec<String> = checkpoints(self.episodes).iter().map(|e| e.to_string()).collect();
                writeln!(s, "{:<8} {:>5} {:>8} {:>10}  by episode [{}]", "kind", "runs", "feasible", "avg cost", marks.join(", ")).ok();
                for k in &self.kinds {
                    let counts: Vec<String> = k.checkpoint_counts.iter().map(|c| c.count.to_string()).collect();
                    writeln!(
                        s,
                        "{:<8} {:>5} {:>8} {:>10}  [{}]",
                        k.kind,
                        k.runs,
                        k.sufficient_feasible,
                        fmt_opt(k.average_cost),
                        counts.join(", ")
                    )
                    .ok();
                    if let Some(r) = &k.reference {
                        let counts: Vec<String> = r.checkpoint_counts.iter().map(|c| c.count.to_string()).collect();
                        writeln!(
                            s,
                            "{:<8} {:>5} {:>8} {:>10.4}  [{}]  (published)",
                            "", r.seeds, r.sufficient_feasible, r.average_cost, counts.join(", ")
                        )
                        .ok();
                    }
                }
            }
            Study::Regress1d => {
                writeln!(s, "{:<8} {:>5} {:>16} {:>16}", "kind", "runs", "median tail loss", "median |err|<=4.5").ok();
                for k in &self.kinds {
                    writeln!(
                        s,
                        "{:<8} {:>5} {:>16} {:>16}",
                        k.kind,
                        k.runs,
                        fmt_opt(k.median_tail_loss),
                        fmt_opt(k.median_interior_error)
                    )
                    .ok();
                }
            }
        }
        let diverged: usize = self.kinds.iter().map(|k| k.diverged).sum();
        if diverged > 0 {
            writeln!(s, "diverged runs: {diverged}").ok();
        }
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub base: RunConfig,
    pub kinds: Vec<PenaltyChoice>,
    pub seeds: Vec<u64>,
    /// Worker threads; runs are distributed per (kind, seed).
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

pub fn run_dir(out: &Path, kind: &str, seed: u64) -> PathBuf {
    out.join(kind).join(format!("seed-{seed}"))
}

/// Run one configuration and, when `out` is set, write its directory.
pub fn execute_run(config: &RunConfig, out: Option<&Path>) -> Result<RunRecord> {
    let record = match config.study {
        Study::Regress1d => {
            let o = run_regress1d(config)?;
            if let Some(dir) = out {
                write_run_dir(dir, config, &o.record)?;
                fs::write(dir.join("curve.csv"), o.curves.to_csv(crate::envs::RegressionTarget::objective))?;
                o.network.write_checkpoint(fs::File::create(dir.join("network.ckpt"))?)?;
            }
            o.record
        }
        Study::Vehicle => {
            let o = run_vehicle(config)?;
            if let Some(dir) = out {
                write_run_dir(dir, config, &o.record)?;
                o.agent.online().write_checkpoint(fs::File::create(dir.join("network.ckpt"))?)?;
            }
            o.record
        }
    };
    Ok(record)
}

/// Independent seeded runs for every (kind, seed) pair, then aggregation.
/// A failed run is recorded as diverged; the sweep always completes.
pub fn run_study(study: &StudyConfig) -> Result<StudySummary> {
    if study.seeds.is_empty() || study.kinds.is_empty() {
        return Err(Error::Config("study needs at least one seed and one penalty kind".into()));
    }
    study.base.validate()?;
    let jobs: Vec<(PenaltyChoice, u64)> = study
        .kinds
        .iter()
        .flat_map(|&k| study.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(study.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(kind, seed)| {
                let mut cfg = study.base.clone().with_penalty(kind);
                cfg.seed = seed;
                let dir = study.out.as_ref().map(|o| run_dir(o, kind.name(), seed));
                execute_run(&cfg, dir.as_deref()).unwrap_or_else(|e| {
                    let mut r = RunRecord::new(cfg.study, kind.name(), seed, cfg.episodes());
                    r.status = RunStatus::Diverged { episode: 0, reason: e.to_string() };
                    r
                })
            })
            .collect()
    });
    let summary = summarize(study.base.study, study.base.episodes(), &records);
    if let Some(out) = &study.out {
        fs::create_dir_all(out)?;
        summary.write_json(&out.join("summary.json"))?;
    }
    Ok(summary)
}

/// Rebuild a summary from run directories (any depth below `root`).
pub fn report(root: &Path) -> Result<StudySummary> {
    let mut records = Vec::new();
    collect_records(root, &mut records)?;
    let first = records
        .first()
        .ok_or_else(|| Error::Io(format!("no record.json under {}", root.display())))?;
    let (study, episodes) = (first.study, first.episodes_planned);
    if records.iter().any(|r| r.study != study || r.episodes_planned != episodes) {
        return Err(Error::Config("runs under one report root must share study and episode count".into()));
    }
    Ok(summarize(study, episodes, &records))
}

fn collect_records(dir: &Path, out: &mut Vec<RunRecord>) -> Result<()> {
    if dir.join("record.json").is_file() {
        out.push(RunRecord::load(dir)?);
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        collect_records(&e, out)?;
    }
    Ok(())
}
