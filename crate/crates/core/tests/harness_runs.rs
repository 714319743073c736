use std::fs;
use std::path::Path;

use avgrl::envs::{EnvDocument, TabularMdp};
use avgrl::harness::{self, Algorithm, EnvKind, ExperimentConfig, Slope};

fn write_env(dir: &Path, name: &str, t: &TabularMdp) -> ExperimentConfig {
    let path = dir.join(name);
    EnvDocument::from(t).save(&path).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.env.kind = EnvKind::TabularFile;
    cfg.env.path = Some(path);
    cfg
}

fn two_state() -> TabularMdp {
    TabularMdp::new(2, 2, vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.1, 0.9], vec![0.1, 0.3, 0.2, 0.9]).unwrap()
}

#[test]
fn short_run_writes_one_row_per_step_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_env(dir.path(), "two.json", &two_state());
    cfg.agent.horizon = 10;
    let a = harness::run(&cfg, &dir.path().join("a")).unwrap();
    harness::run(&cfg, &dir.path().join("b")).unwrap();
    let x = fs::read_to_string(dir.path().join("a/seed-0/steps.csv")).unwrap();
    let y = fs::read_to_string(dir.path().join("b/seed-0/steps.csv")).unwrap();
    assert_eq!(x, y);
    let lines: Vec<&str> = x.lines().collect();
    assert_eq!(lines[0], "t,s_t,a_t,r_t,J_star,cum_regret,m_t,logdet_Lambda");
    assert_eq!(lines.len(), 11);
    let last: f64 = lines[10].split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(last, a[0].regret);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/seed-0/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["R_T"].as_f64().unwrap(), last);
    assert!(summary["config"]["agent"]["horizon"] == 10);
    let timing = fs::read_to_string(dir.path().join("a/seed-0/timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 11);
}

#[test]
fn random_agent_regret_grows_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_env(dir.path(), "two.json", &two_state());
    cfg.agent.algorithm = Algorithm::Random;
    let s = harness::sweep(&cfg, &[200, 400, 800], 8).unwrap();
    assert!(s.points.iter().all(|p| p.mean > 0.0));
    let slope = s.slope().unwrap();
    assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
}

#[test]
fn dc_beats_random_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_env(dir.path(), "two.json", &two_state());
    cfg.agent.horizon = 500;
    cfg.run.num_seeds = 4;
    let dc: f64 = harness::run(&cfg, &dir.path().join("dc")).unwrap().iter().map(|s| s.regret).sum();
    cfg.agent.algorithm = Algorithm::Random;
    let random: f64 = harness::run(&cfg, &dir.path().join("random")).unwrap().iter().map(|s| s.regret).sum();
    assert!(dc / 500.0 < random / 500.0, "dc {dc} random {random}");
}

#[test]
fn baseline_and_dc_regret_per_step_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_env(dir.path(), "two.json", &two_state());
    for algorithm in [Algorithm::Dc, Algorithm::Baseline, Algorithm::Tabular] {
        cfg.agent.algorithm = algorithm;
        let s = harness::sweep(&cfg, &[250, 1000], 6).unwrap();
        let (a, b) = (s.points[0].mean / 250.0, s.points[1].mean / 1000.0);
        assert!(b < a, "{algorithm:?}: {a} -> {b}");
    }
}

#[test]
fn constant_reward_gives_degenerate_slope() {
    let dir = tempfile::tempdir().unwrap();
    let t = TabularMdp::new(2, 2, vec![0.5; 8], vec![0.25; 4]).unwrap();
    let cfg = write_env(dir.path(), "flat.json", &t);
    let s = harness::sweep(&cfg, &[20, 40], 2).unwrap();
    assert!(s.cells.iter().all(|c| c.regret == Some(0.0)));
    assert_eq!(s.slope, Slope::Degenerate);
}

#[test]
fn single_horizon_omits_the_slope() {
    let mut cfg = ExperimentConfig::default();
    cfg.agent.algorithm = Algorithm::Random;
    let s = harness::sweep(&cfg, &[50], 3).unwrap();
    assert_eq!(s.slope, Slope::Omitted);
    assert_eq!(s.points.len(), 1);
    assert_eq!(s.points[0].runs, 3);
}

#[test]
fn sweep_rejects_unsorted_horizons() {
    let cfg = ExperimentConfig::default();
    assert!(harness::sweep(&cfg, &[500, 250], 2).unwrap_err().is_config());
}

#[test]
fn file_kind_must_match_document() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_env(dir.path(), "two.json", &two_state());
    cfg.env.kind = EnvKind::LinearFile;
    assert!(harness::prepare(&cfg).unwrap_err().is_config());
}

#[test]
fn suites_run_from_configuration() {
    let mut cfg = ExperimentConfig::default();
    cfg.agent.horizon = 60;
    cfg.run.num_seeds = 2;
    for suite in [harness::Suite::Clip, harness::Suite::Negative, harness::Suite::Lemma2, harness::Suite::TabularDeviation]
    {
        let o = harness::run_suite(suite, &cfg).unwrap();
        assert!(o.passed, "{suite:?}: {:?}", o.reports);
    }
    let o = harness::run_suite(harness::Suite::Deviation, &cfg).unwrap();
    assert_eq!(o.reports.len(), 3);
    assert!(o.reports[1].passed(), "invariants: {:?}", o.reports[1]);
}
