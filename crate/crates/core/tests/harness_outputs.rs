use std::fs;

use dynpen::harness::config::{PenaltyChoice, RunConfig, Study};
use dynpen::harness::study::{execute_run, report, run_study, StudyConfig};

fn short_vehicle(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(Study::Vehicle, seed).with_episodes(40);
    cfg.vehicle.eval_every = 20;
    cfg
}

#[test]
fn rerun_reproduces_logs_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for kind in PenaltyChoice::ALL {
        let cfg = short_vehicle(5).with_penalty(kind);
        execute_run(&cfg, Some(&a.path().join(kind.name()))).unwrap();
        execute_run(&cfg, Some(&b.path().join(kind.name()))).unwrap();
        for file in ["loss.csv", "eval.csv", "record.json", "network.ckpt"] {
            let x = fs::read(a.path().join(kind.name()).join(file)).unwrap();
            let y = fs::read(b.path().join(kind.name()).join(file)).unwrap();
            assert_eq!(x, y, "{} {}", kind.name(), file);
        }
    }
}

#[test]
fn regression_rerun_is_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(Study::Regress1d, 9).with_episodes(60);
    execute_run(&cfg, Some(a.path())).unwrap();
    execute_run(&cfg, Some(b.path())).unwrap();
    for file in ["loss.csv", "curve.csv", "network.ckpt"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let serial = tempfile::tempdir().unwrap();
    let parallel = tempfile::tempdir().unwrap();
    let mk = |jobs, out: &std::path::Path| StudyConfig {
        base: short_vehicle(0),
        kinds: PenaltyChoice::ALL.to_vec(),
        seeds: vec![0, 1],
        jobs,
        out: Some(out.to_path_buf()),
    };
    let s1 = run_study(&mk(1, serial.path())).unwrap();
    let s4 = run_study(&mk(4, parallel.path())).unwrap();
    assert_eq!(s1, s4);
    for kind in PenaltyChoice::ALL {
        for seed in [0, 1] {
            let rel = format!("{}/seed-{seed}/loss.csv", kind.name());
            assert_eq!(fs::read(serial.path().join(&rel)).unwrap(), fs::read(parallel.path().join(&rel)).unwrap());
        }
    }
}

#[test]
fn report_rebuilds_the_written_summary() {
    let out = tempfile::tempdir().unwrap();
    let study = StudyConfig {
        base: short_vehicle(0),
        kinds: PenaltyChoice::ALL.to_vec(),
        seeds: vec![3, 4],
        jobs: 2,
        out: Some(out.path().to_path_buf()),
    };
    let summary = run_study(&study).unwrap();
    assert_eq!(report(out.path()).unwrap(), summary);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["kinds"].as_array().unwrap().len(), 3);
}

#[test]
fn written_config_reloads_to_the_same_run() {
    let out = tempfile::tempdir().unwrap();
    let cfg = short_vehicle(2).with_penalty(PenaltyChoice::Linear);
    execute_run(&cfg, Some(out.path())).unwrap();
    let reloaded = RunConfig::load(&out.path().join("config.toml")).unwrap();
    assert_eq!(reloaded.resolved(), cfg.resolved());
}
