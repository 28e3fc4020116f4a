//! Command-line front end for the regression and vehicle studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynpen::harness::{execute_run, report, run_study, PenaltyChoice, RunConfig, Study, StudyConfig};

#[derive(Parser)]
#[command(name = "dynpen", version, about = "Dynamic penalty scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized 1-D target function (one run, or a sweep with --seeds)
    Regress1d(RunArgs),
    /// Train a DQN on the double-integrator vehicle (one run, or a sweep with --seeds)
    Vehicle(RunArgs),
    /// Sweep every penalty kind over a seed range
    Study(StudyArgs),
    /// Re-aggregate existing run directories
    Report {
        /// Study or run directory to scan for record.json files
        dir: PathBuf,
        /// Also write summary.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML, dotted keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed runs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_kind)]
    penalty: Option<PenaltyChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive seed range `N..M`
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedRange>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_parser = parse_study, default_value = "vehicle")]
    study: Study,
    /// Restrict to one penalty kind (default: all three)
    #[arg(long, value_parser = parse_kind)]
    penalty: Option<PenaltyChoice>,
    #[arg(long, value_parser = parse_seeds, default_value = "0..9")]
    seeds: SeedRange,
    #[command(flatten)]
    common: Common,
}

fn parse_kind(s: &str) -> Result<PenaltyChoice, String> {
    s.parse().map_err(|e: dynpen::Error| e.to_string())
}

fn parse_study(s: &str) -> Result<Study, String> {
    match s {
        "regress1d" => Ok(Study::Regress1d),
        "vehicle" => Ok(Study::Vehicle),
        _ => Err(format!("unknown study {s:?}")),
    }
}

#[derive(Clone, Debug)]
struct SeedRange(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let lo: u64 = lo.parse().map_err(|_| format!("bad seed {lo:?}"))?;
    let hi: u64 = hi.parse().map_err(|_| format!("bad seed {hi:?}"))?;
    if hi < lo {
        return Err(format!("empty seed range {s}"));
    }
    Ok(SeedRange((lo..=hi).collect()))
}

fn base_config(study: Study, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::new(study, 0),
    };
    if common.config.is_some() && cfg.study != study {
        bail!("config file is for study {:?}, command is {:?}", cfg.study.name(), study.name());
    }
    if let Some(e) = common.episodes {
        cfg.episodes = Some(e);
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn finish(summary: &dynpen::harness::StudySummary) -> ExitCode {
    print!("{}", summary.to_table());
    if summary.any_diverged() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn run_single(study: Study, args: RunArgs) -> Result<ExitCode> {
    let mut cfg = base_config(study, &args.common)?;
    if let Some(kind) = args.penalty {
        cfg.penalty.kind = kind;
    }
    if let Some(seeds) = args.seeds {
        let summary = run_study(&StudyConfig {
            kinds: vec![cfg.penalty.kind],
            seeds: seeds.0,
            jobs: args.common.jobs,
            out: cfg.out.clone(),
            base: cfg,
        })?;
        return Ok(finish(&summary));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = cfg.out.clone().unwrap_or_else(|| {
        Path::new("runs").join(study.name()).join(cfg.penalty.kind.name()).join(format!("seed-{}", cfg.seed))
    });
    let record = execute_run(&cfg, Some(&out))?;
    let last = record.losses.last().map(|l| (l.episode, l.mean_loss, l.mu));
    if let Some((ep, loss, mu)) = last {
        println!("episode {ep}: loss {loss:.6} mu {mu}");
    }
    if let Some(t) = record.final_tail_loss {
        println!("final-window mean loss: {t:.6}");
    }
    if let Some(e) = record.interior_max_error {
        println!("max interior error: {e:.6}");
    }
    if study == Study::Vehicle {
        match record.first_pass_episode {
            Some(ep) => println!(
                "sufficient feasible from episode {ep}, best mean cost {:.4}",
                record.best_pass_cost.unwrap_or(f64::NAN)
            ),
            None => println!("no sufficient feasible policy found"),
        }
    }
    println!("wrote {}", out.display());
    Ok(if record.diverged() {
        eprintln!("run diverged: {:?}", record.status);
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Regress1d(args) => run_single(Study::Regress1d, args),
        Command::Vehicle(args) => run_single(Study::Vehicle, args),
        Command::Study(args) => {
            let cfg = base_config(args.study, &args.common)?;
            let kinds = args.penalty.map_or_else(|| PenaltyChoice::ALL.to_vec(), |k| vec![k]);
            let out = cfg.out.clone().or_else(|| Some(Path::new("runs").join(format!("{}-study", args.study.name()))));
            let summary = run_study(&StudyConfig { base: cfg, kinds, seeds: args.seeds.0, jobs: args.common.jobs, out })?;
            Ok(finish(&summary))
        }
        Command::Report { dir, out } => {
            let summary = report(&dir)?;
            if let Some(path) = out {
                summary.write_json(&path)?;
            }
            Ok(finish(&summary))
        }
    }
}
