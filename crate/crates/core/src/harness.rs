//! Experiment configuration, seeded runs, sweeps and suite orchestration.
//!
//! A run plays one agent against one environment for `T` steps and writes
//! `steps.csv`, `timing.csv` and `summary.json`. `steps.csv` depends only on
//! the configuration and the seed, so identical configurations reproduce it
//! byte for byte; wall-clock measurements go to the other two files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    auto_gamma, theory_beta, Agent, AgentConfig, AgentError, BaselineAgent, DcAgent, DcVariant, RandomAgent,
    TabularAgent, TabularVariant,
};
use crate::envs::{random_unichain_tabular, EnvDocument, EnvError, FeatureMap, LinearMdpModel, TabularMdp};
use crate::oracle::{discounted_vi, relative_vi, GainBias, OracleError, DEFAULT_TOL};
use crate::rng::{stream, Stream};
use crate::verify::{self, CheckReport, DcRunSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("oracle failed on the environment: {source}\nenvironment: {dump}")]
    Oracle { source: OracleError, dump: String },
    #[error("agent: {0}")]
    Agent(#[from] AgentError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Errors detected before any computation starts.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Env(_) | HarnessError::Json(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    TabularRandom,
    TabularFile,
    LinearFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub states: usize,
    pub actions: usize,
    pub epsilon_mix: f64,
    pub env_seed: u64,
    /// Environment document for the file kinds.
    pub path: Option<PathBuf>,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self { kind: EnvKind::TabularRandom, states: 3, actions: 2, epsilon_mix: 0.1, env_seed: 7, path: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dc,
    Baseline,
    Tabular,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GammaMode {
    /// `γ = 1 − √(1/T)`
    Auto,
    Explicit { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpanMode {
    /// `H = 2·sp(v*)`
    Oracle,
    Explicit { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaMode {
    /// `β = 2c_β·sp(v*)·d·√(ln(dT/δ))`
    Theory { c_beta: f64, delta: f64 },
    Explicit { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSpec {
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub gamma: GammaMode,
    pub lambda: f64,
    pub h: SpanMode,
    pub beta: BetaMode,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dc,
            horizon: 500,
            gamma: GammaMode::Auto,
            lambda: 1.0,
            h: SpanMode::Oracle,
            beta: BetaMode::Theory { c_beta: 0.01, delta: 0.1 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub agent_seed: u64,
    pub num_seeds: usize,
    pub output_dir: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { agent_seed: 0, num_seeds: 1, output_dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    pub run: RunSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("configurations always serialize")
    }

    /// Checks everything that does not need the environment.
    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let e = &self.env;
        match e.kind {
            EnvKind::TabularRandom => {
                if e.states == 0 || e.actions == 0 {
                    return bad("env.states and env.actions must be positive".into());
                }
                if !(e.epsilon_mix > 0.0 && e.epsilon_mix <= 1.0) {
                    return bad(format!("env.epsilon_mix must lie in (0, 1], got {}", e.epsilon_mix));
                }
            }
            EnvKind::TabularFile | EnvKind::LinearFile => {
                if e.path.is_none() {
                    return bad("env.path is required for file environments".into());
                }
            }
        }
        let a = &self.agent;
        if a.horizon == 0 {
            return bad("agent.horizon must be positive".into());
        }
        if let GammaMode::Explicit { value } = a.gamma {
            if !(0.0..1.0).contains(&value) {
                return bad(format!("agent.gamma must lie in [0, 1), got {value}"));
            }
        }
        if !(a.lambda > 0.0 && a.lambda.is_finite()) {
            return bad(format!("agent.lambda must be positive, got {}", a.lambda));
        }
        if let SpanMode::Explicit { value } = a.h {
            if !(value >= 0.0 && value.is_finite()) {
                return bad(format!("agent.h must be nonnegative, got {value}"));
            }
        }
        match a.beta {
            BetaMode::Theory { c_beta, delta } => {
                if !(c_beta >= 0.0 && c_beta.is_finite()) || !(delta > 0.0 && delta < 1.0) {
                    return bad(format!("agent.beta needs c_beta ≥ 0 and δ in (0, 1), got {c_beta}, {delta}"));
                }
            }
            BetaMode::Explicit { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return bad(format!("agent.beta must be nonnegative, got {value}"));
                }
            }
        }
        if self.run.num_seeds == 0 {
            return bad("run.num_seeds must be positive".into());
        }
        Ok(())
    }

    /// Agent seeds of the run, `agent_seed, agent_seed + 1, …`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.num_seeds as u64).map(|k| self.run.agent_seed + k).collect()
    }
}

/// An environment together with its exact average-reward solution.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: Arc<LinearMdpModel>,
    pub tabular: TabularMdp,
    pub oracle: GainBias,
}

impl Prepared {
    pub fn new(model: LinearMdpModel) -> Result<Self, HarnessError> {
        let tabular = model.to_tabular()?;
        let oracle = relative_vi(&tabular, DEFAULT_TOL)
            .map_err(|source| HarnessError::Oracle { source, dump: EnvDocument::from(&model).to_json() })?;
        Ok(Self { model: Arc::new(model), tabular, oracle })
    }

    pub fn gain(&self) -> f64 {
        self.oracle.gain
    }

    pub fn span(&self) -> f64 {
        self.oracle.span()
    }

    /// Resolves the agent parameters for horizon `horizon`.
    pub fn agent_config(&self, spec: &AgentSpec, horizon: usize) -> AgentConfig {
        let d = self.model.dim();
        let sp = self.span();
        AgentConfig {
            gamma: match spec.gamma {
                GammaMode::Auto => auto_gamma(horizon),
                GammaMode::Explicit { value } => value,
            },
            lambda: spec.lambda,
            h: match spec.h {
                SpanMode::Oracle => 2.0 * sp,
                SpanMode::Explicit { value } => value,
            },
            beta: match spec.beta {
                BetaMode::Theory { c_beta, delta } => theory_beta(horizon, d, sp, c_beta, delta),
                BetaMode::Explicit { value } => value,
            },
            horizon,
        }
    }
}

pub fn build_env(spec: &EnvSpec) -> Result<LinearMdpModel, HarnessError> {
    match spec.kind {
        EnvKind::TabularRandom => {
            let mut rng = stream(spec.env_seed, Stream::EnvBuild);
            let t = random_unichain_tabular(spec.states, spec.actions, &mut rng, spec.epsilon_mix)?;
            Ok(crate::envs::embed_tabular(&t))
        }
        EnvKind::TabularFile | EnvKind::LinearFile => {
            let path = spec.path.as_ref().ok_or_else(|| HarnessError::Config("env.path is required".into()))?;
            let doc = EnvDocument::load(path)?;
            let tabular_doc = matches!(doc, EnvDocument::Tabular { .. });
            if (spec.kind == EnvKind::TabularFile) != tabular_doc {
                return Err(HarnessError::Config(format!(
                    "{} does not hold a {} environment",
                    path.display(),
                    if spec.kind == EnvKind::TabularFile { "tabular" } else { "linear" }
                )));
            }
            Ok(doc.into_model()?)
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.check()?;
    Prepared::new(build_env(&cfg.env)?)
}

fn make_agent(
    prep: &Prepared,
    algorithm: Algorithm,
    acfg: AgentConfig,
    seed: u64,
) -> Result<Box<dyn Agent>, HarnessError> {
    let model = &prep.model;
    Ok(match algorithm {
        Algorithm::Dc => Box::new(DcAgent::new(model.clone(), acfg, DcVariant::Faithful)?),
        Algorithm::Baseline => Box::new(BaselineAgent::new(model.clone(), model.num_states(), acfg)?),
        Algorithm::Tabular => Box::new(TabularAgent::new(model, acfg, TabularVariant::Faithful)?),
        Algorithm::Random => {
            acfg.validate()?;
            Box::new(RandomAgent::new(model.num_actions(), stream(seed, Stream::Agent)))
        }
    })
}

/// One row of `steps.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub t: usize,
    pub s_t: usize,
    pub a_t: usize,
    pub r_t: f64,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub cum_regret: f64,
    pub m_t: Option<f64>,
    #[serde(rename = "logdet_Lambda")]
    pub logdet_lambda: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<StepRow>,
    pub plan_micros: Vec<u64>,
    pub wall_clock_secs: f64,
}

impl Trajectory {
    pub fn regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }
}

/// Plays `algorithm` for `horizon` steps from state 0 with transitions drawn
/// from the seed's transition stream.
pub fn simulate(
    prep: &Prepared,
    algorithm: Algorithm,
    acfg: AgentConfig,
    seed: u64,
) -> Result<Trajectory, HarnessError> {
    let mut agent = make_agent(prep, algorithm, acfg, seed)?;
    let model = &prep.model;
    let gain = prep.gain();
    let mut rng = stream(seed, Stream::Transitions);
    let mut rows = Vec::with_capacity(acfg.horizon);
    let mut plan_micros = Vec::with_capacity(acfg.horizon);
    let started = Instant::now();
    let mut s = 0;
    let mut regret = 0.0;
    for t in 1..=acfg.horizon {
        let tick = Instant::now();
        let a = agent.act(s);
        plan_micros.push(tick.elapsed().as_micros() as u64);
        let m_t = agent.threshold();
        let r = model.reward(s, a);
        let next = model.sample_next(s, a, &mut rng);
        agent.observe(r, next);
        regret += gain - r;
        rows.push(StepRow {
            t,
            s_t: s,
            a_t: a,
            r_t: r,
            j_star: gain,
            cum_regret: regret,
            m_t,
            logdet_lambda: agent.logdet(),
        });
        s = next;
    }
    Ok(Trajectory { rows, plan_micros, wall_clock_secs: started.elapsed().as_secs_f64() })
}

pub fn steps_csv(rows: &[StepRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn timing_csv(micros: &[u64]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "plan_micros"])?;
    for (i, m) in micros.iter().enumerate() {
        w.write_record([(i + 1).to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub horizon: usize,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub span_bias: f64,
    #[serde(rename = "R_T")]
    pub regret: f64,
    pub agent: AgentConfig,
    pub wall_clock_secs: f64,
    pub config: ExperimentConfig,
    pub code_version: String,
}

/// Runs every seed of `cfg`; seed `k` writes into `out/seed-k`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let prep = prepare(cfg)?;
    let acfg = prep.agent_config(&cfg.agent, cfg.agent.horizon);
    acfg.validate()?;
    let cells: Vec<Result<RunSummary, HarnessError>> = pool()?.install(|| {
        cfg.seeds()
            .into_par_iter()
            .map(|seed| {
                let traj = simulate(&prep, cfg.agent.algorithm, acfg, seed)?;
                let dir = out.join(format!("seed-{seed}"));
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("steps.csv"), steps_csv(&traj.rows)?)?;
                fs::write(dir.join("timing.csv"), timing_csv(&traj.plan_micros)?)?;
                let summary = RunSummary {
                    algorithm: cfg.agent.algorithm,
                    seed,
                    horizon: acfg.horizon,
                    j_star: prep.gain(),
                    span_bias: prep.span(),
                    regret: traj.regret(),
                    agent: acfg,
                    wall_clock_secs: traj.wall_clock_secs,
                    config: cfg.clone(),
                    code_version: env!("CARGO_PKG_VERSION").to_string(),
                };
                fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
                Ok(summary)
            })
            .collect()
    });
    cells.into_iter().collect()
}

/// Worker pool capped by `AVGRL_THREADS` when set.
pub fn pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("AVGRL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HarnessError::Config(format!("AVGRL_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Config(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub horizon: usize,
    pub seed: u64,
    #[serde(rename = "R_T")]
    pub regret: Option<f64>,
    pub wall_clock_secs: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub horizon: usize,
    pub runs: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Slope {
    /// Fewer than two horizons.
    Omitted,
    /// Some mean regret is not positive, so its logarithm is undefined.
    Degenerate,
    Fitted { slope: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub algorithm: Algorithm,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub points: Vec<SweepPoint>,
    pub slope: Slope,
    pub cells: Vec<SweepCell>,
    pub config: ExperimentConfig,
}

impl SweepSummary {
    pub fn slope(&self) -> Option<f64> {
        match self.slope {
            Slope::Fitted { slope } => Some(slope),
            _ => None,
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Slope {
    if xs.len() < 2 {
        return Slope::Omitted;
    }
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Slope::Degenerate;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Slope::Fitted { slope: sxy / sxx }
}

/// Runs `seeds` seeds for every horizon. Failed cells are recorded and left
/// out of the means.
pub fn sweep(cfg: &ExperimentConfig, horizons: &[usize], seeds: usize) -> Result<SweepSummary, HarnessError> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(HarnessError::Config(format!("horizons must be positive and strictly ascending, got {horizons:?}")));
    }
    if seeds == 0 {
        return Err(HarnessError::Config("need at least one seed".into()));
    }
    let prep = prepare(cfg)?;
    let jobs: Vec<(usize, u64)> =
        horizons.iter().flat_map(|&h| (0..seeds as u64).map(move |k| (h, cfg.run.agent_seed + k))).collect();
    let mut cells: Vec<SweepCell> = pool()?.install(|| {
        jobs.par_iter()
            .map(|&(horizon, seed)| {
                let acfg = prep.agent_config(&cfg.agent, horizon);
                match simulate(&prep, cfg.agent.algorithm, acfg, seed) {
                    Ok(tr) => SweepCell {
                        horizon,
                        seed,
                        regret: Some(tr.regret()),
                        wall_clock_secs: Some(tr.wall_clock_secs),
                        error: None,
                    },
                    Err(e) => SweepCell { horizon, seed, regret: None, wall_clock_secs: None, error: Some(e.to_string()) },
                }
            })
            .collect()
    });
    cells.sort_by_key(|c| (c.horizon, c.seed));
    let points: Vec<SweepPoint> = horizons
        .iter()
        .filter_map(|&h| {
            let rs: Vec<f64> = cells.iter().filter(|c| c.horizon == h).filter_map(|c| c.regret).collect();
            if rs.is_empty() {
                return None;
            }
            let n = rs.len() as f64;
            let mean = rs.iter().sum::<f64>() / n;
            let var = if rs.len() > 1 { rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            Some(SweepPoint { horizon: h, runs: rs.len(), mean, stddev: var.sqrt() })
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.horizon as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    Ok(SweepSummary {
        algorithm: cfg.agent.algorithm,
        j_star: prep.gain(),
        slope: log_log_slope(&xs, &ys),
        points,
        cells,
        config: cfg.clone(),
    })
}

/// Writes `sweep.json` into `out`.
pub fn write_sweep(summary: &SweepSummary, out: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(out)?;
    let path = out.join("sweep.json");
    fs::write(&path, serde_json::to_string_pretty(summary)?)?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Clip,
    Deviation,
    TabularDeviation,
    Optimism,
    StepBound,
    Lemma2,
    Negative,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Clip,
        Suite::Deviation,
        Suite::TabularDeviation,
        Suite::Optimism,
        Suite::StepBound,
        Suite::Lemma2,
        Suite::Negative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Clip => "clip",
            Suite::Deviation => "deviation",
            Suite::TabularDeviation => "tabular-deviation",
            Suite::Optimism => "optimism",
            Suite::StepBound => "step-bound",
            Suite::Lemma2 => "lemma2",
            Suite::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Whether the suite is judged by pass fraction instead of zero violations.
    pub fn statistical(self) -> bool {
        matches!(self, Suite::Optimism | Suite::StepBound)
    }
}

/// Pass fraction required of the statistical suites.
pub const STATISTICAL_PASS: f64 = 0.99;
/// Random samples drawn by the clip suite.
pub const CLIP_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub reports: Vec<CheckReport>,
    pub passed: bool,
}

/// Runs one verification suite on the environment and agent settings of `cfg`
/// (the seeds are `cfg.seeds()`).
pub fn run_suite(suite: Suite, cfg: &ExperimentConfig) -> Result<SuiteOutcome, HarnessError> {
    let reports = match suite {
        Suite::Clip => vec![verify::check_clip_properties(CLIP_SAMPLES, cfg.run.agent_seed)],
        Suite::Negative => vec![verify::check_negative(&verify::NEGATIVE_CASES)],
        Suite::Lemma2 => vec![verify::check_discounting(20, &[0.9, 0.99], cfg.run.agent_seed, 1e-8)
            .map_err(|source| HarnessError::Oracle { source, dump: "random unichain batch".into() })?],
        Suite::TabularDeviation => {
            let prep = prepare(cfg)?;
            let acfg = prep.agent_config(&cfg.agent, cfg.agent.horizon);
            acfg.validate()?;
            if !prep.model.is_one_hot() {
                return Err(AgentError::NotTabular.into());
            }
            let runs: Vec<_> = cfg
                .seeds()
                .into_iter()
                .map(|seed| verify::check_tabular_run(&prep.model, acfg, TabularVariant::Faithful, seed, 0))
                .collect();
            let dev: Vec<_> = runs.iter().map(|r| r.deviation.clone()).collect();
            let inv: Vec<_> = runs.iter().map(|r| r.invariants.clone()).collect();
            vec![CheckReport::merge("tabular-deviation", &dev), CheckReport::merge("invariants", &inv)]
        }
        Suite::Deviation | Suite::Optimism | Suite::StepBound => {
            let prep = prepare(cfg)?;
            let acfg = prep.agent_config(&cfg.agent, cfg.agent.horizon);
            acfg.validate()?;
            let vstar = if suite == Suite::Deviation {
                None
            } else {
                Some(
                    discounted_vi(&prep.tabular, acfg.gamma, DEFAULT_TOL)
                        .map_err(|source| HarnessError::Oracle {
                            source,
                            dump: EnvDocument::from(prep.model.as_ref()).to_json(),
                        })?
                        .v,
                )
            };
            let runs: Vec<_> = pool()?.install(|| {
                cfg.seeds()
                    .into_par_iter()
                    .map(|seed| {
                        verify::check_dc_run(&DcRunSpec {
                            model: prep.model.clone(),
                            cfg: acfg,
                            variant: DcVariant::Faithful,
                            seed,
                            start_state: 0,
                            full_sweep: acfg.horizon <= verify::FULL_SWEEP_MAX_T,
                            vstar: vstar.clone(),
                        })
                    })
                    .collect()
            });
            let pick = |f: &dyn Fn(&verify::DcRunChecks) -> Option<CheckReport>, name: &str| {
                CheckReport::merge(name, &runs.iter().filter_map(f).collect::<Vec<_>>())
            };
            match suite {
                Suite::Deviation => vec![
                    pick(&|r| Some(r.deviation.clone()), "deviation"),
                    pick(&|r| Some(r.invariants.clone()), "invariants"),
                    pick(&|r| Some(r.potential.clone()), "potential"),
                ],
                Suite::Optimism => vec![pick(&|r| r.optimism.clone(), "optimism")],
                _ => vec![pick(&|r| r.step_bound.clone(), "step-bound")],
            }
        }
    };
    let passed = if suite.statistical() {
        reports.iter().all(|r| r.pass_fraction >= STATISTICAL_PASS)
    } else {
        reports.iter().all(CheckReport::passed)
    };
    Ok(SuiteOutcome { suite, reports, passed })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub span_bias: f64,
    pub bias: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Exact gain, bias and an optimal policy of the environment stored at `path`.
pub fn oracle_report(path: &Path) -> Result<OracleReport, HarnessError> {
    let prep = Prepared::new(EnvDocument::load(path)?.into_model()?)?;
    let na = prep.model.num_actions();
    Ok(OracleReport {
        num_states: prep.model.num_states(),
        num_actions: na,
        dim: prep.model.dim(),
        j_star: prep.gain(),
        span_bias: prep.span(),
        bias: prep.oracle.bias.clone(),
        policy: prep.oracle.greedy_policy(na),
        iterations: prep.oracle.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"agent": {"algorithm": "random", "horizon": 10}}"#).unwrap();
        assert_eq!(cfg.agent.algorithm, Algorithm::Random);
        assert_eq!(cfg.env, EnvSpec::default());
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        assert!(ExperimentConfig::from_json(r#"{"agent": {"horizn": 10}}"#).unwrap_err().is_config());
        assert!(ExperimentConfig::from_json(r#"{"agent": {"gamma": {"mode": "explicit", "value": 1.0}}}"#)
            .unwrap_err()
            .is_config());
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "linear-file"}}"#).unwrap_err().is_config());
    }

    #[test]
    fn slope_cases() {
        assert_eq!(log_log_slope(&[10.0], &[3.0]), Slope::Omitted);
        assert_eq!(log_log_slope(&[10.0, 20.0], &[0.0, 0.0]), Slope::Degenerate);
        match log_log_slope(&[1.0, 2.0, 4.0], &[3.0, 6.0, 12.0]) {
            Slope::Fitted { slope } => assert!((slope - 1.0).abs() < 1e-12),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn regret_column_accumulates() {
        let mut cfg = ExperimentConfig::default();
        cfg.agent.horizon = 20;
        cfg.agent.algorithm = Algorithm::Random;
        let prep = prepare(&cfg).unwrap();
        let tr = simulate(&prep, Algorithm::Random, prep.agent_config(&cfg.agent, 20), 3).unwrap();
        let mut acc = 0.0;
        for r in &tr.rows {
            acc += r.j_star - r.r_t;
            assert_eq!(r.cum_regret, acc);
        }
        assert_eq!(tr.regret(), acc);
    }
}
