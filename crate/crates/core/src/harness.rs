//! Experiment orchestration: configs, the alternating train/eval protocol,
//! seed-parallel execution, aggregation and CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Algorithm, AnyAgent};
use crate::flat::{ties_max, BackupParams, ParamError, RewardMode};
use crate::hierarchy::{
    run_episode, run_eval_episode, Behaviour, HierarchyConfig, HierarchyError, LevelAction,
};
use crate::mdp::{builtin_environment, GridWorld, MapError, PrimitiveAction, StateId};
use crate::rng::{LevelRngs, Phase};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown environment {0:?}")]
    UnknownEnvironment(String),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("backup parameters: {0}")]
    Params(#[from] ParamError),
    #[error("hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("{0} requires k = 1")]
    FlatNeedsOneLevel(&'static str),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("n0 = {n0} is not divisible by the atomic horizon {horizon} of k = {k}")]
    NotDivisible { n0: usize, horizon: usize, k: usize },
    #[error("no records to aggregate")]
    Empty,
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn default_budget() -> usize {
    3
}
fn default_k() -> usize {
    1
}
fn default_n() -> usize {
    1
}
fn default_gamma() -> f64 {
    0.95
}
fn default_alpha() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> usize {
    200
}
fn default_episodes() -> usize {
    50
}
fn default_t_max() -> usize {
    100_000
}
fn default_eps_train() -> f64 {
    0.25
}
fn default_eps_eval() -> f64 {
    0.05
}
fn default_cutoff() -> f64 {
    1e-8
}

/// One experiment. Every field except `environment` and `algorithm` has a
/// default, so a config file can be as short as two lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled map name or slug; ignored when `map_file` is set.
    pub environment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_file: Option<PathBuf>,
    pub algorithm: Algorithm,
    #[serde(default = "default_k")]
    pub k: usize,
    /// `H_i`, shared by every level.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub behaviour: Behaviour,
    #[serde(default)]
    pub reward_mode: RewardMode,
    #[serde(default = "default_true")]
    pub restricted_actions: bool,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_eps_train")]
    pub epsilon_train: f64,
    #[serde(default = "default_eps_eval")]
    pub epsilon_eval: f64,
    #[serde(default)]
    pub epsilon_upper: f64,
    #[serde(default = "default_cutoff")]
    pub trace_cutoff: f64,
    #[serde(default)]
    pub root_seed: u64,
}

impl ExperimentConfig {
    /// Defaults for everything but the environment and algorithm.
    pub fn new(environment: &str, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            environment: environment.to_string(),
            map_file: None,
            algorithm,
            k: default_k(),
            budget: default_budget(),
            n: default_n(),
            lambda: 0.0,
            gamma: default_gamma(),
            alpha: default_alpha(),
            behaviour: Behaviour::FullHierarchy,
            reward_mode: RewardMode::Binary,
            restricted_actions: true,
            seeds: default_seeds(),
            episodes: default_episodes(),
            t_max: default_t_max(),
            epsilon_train: default_eps_train(),
            epsilon_eval: default_eps_eval(),
            epsilon_upper: 0.0,
            trace_cutoff: default_cutoff(),
            root_seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn params(&self) -> BackupParams {
        BackupParams {
            gamma: self.gamma,
            alpha: self.alpha,
            lambda: self.lambda,
            n: self.n,
            trace_cutoff: self.trace_cutoff,
            reward_mode: self.reward_mode,
        }
    }

    pub fn hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            budgets: vec![self.budget; self.k],
            epsilon_train: self.epsilon_train,
            epsilon_eval: self.epsilon_eval,
            epsilon_upper: self.epsilon_upper,
            restricted_actions: self.restricted_actions,
        }
    }

    pub fn world(&self) -> Result<GridWorld, HarnessError> {
        match &self.map_file {
            Some(path) => {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
                Ok(GridWorld::parse(name, &fs::read_to_string(path)?)?)
            }
            None => builtin_environment(&self.environment)
                .ok_or_else(|| HarnessError::UnknownEnvironment(self.environment.clone())),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params().validate()?;
        self.hierarchy().validate()?;
        if self.algorithm.is_flat() && self.k != 1 {
            return Err(HarnessError::FlatNeedsOneLevel(self.algorithm.name()));
        }
        for (value, name) in [(self.seeds, "seeds"), (self.episodes, "episodes"), (self.t_max, "t_max")] {
            if value == 0 {
                return Err(HarnessError::Zero(name));
            }
        }
        Ok(())
    }

    /// Short file-name-safe identifier.
    pub fn label(&self) -> String {
        let depth = match self.algorithm {
            Algorithm::HierTB | Algorithm::FlatTB => format!("n{}", self.n),
            Algorithm::HierQLambda | Algorithm::FlatQLambda => format!("lambda{}", self.lambda),
            _ => "1step".to_string(),
        };
        let behaviour = match self.behaviour {
            Behaviour::FullHierarchy => "full",
            Behaviour::FlatOnly => "flatonly",
        };
        format!("{}_{}_k{}_{}_g{:.5}", self.algorithm.name(), depth, self.k, behaviour, self.gamma)
    }
}

/// Rows that know their CSV header (so empty files still get one).
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub episode: usize,
    pub phase: Phase,
    pub steps: usize,
    pub truncated: bool,
}

impl CsvRow for RunRecord {
    const HEADER: &'static [&'static str] = &["seed", "episode", "phase", "steps", "truncated"];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub mean_log: f64,
    pub se_log: f64,
    pub n_seeds: usize,
}

impl CsvRow for EpisodeStat {
    const HEADER: &'static [&'static str] = &["episode", "mean_log", "se_log", "n_seeds"];
}

pub fn write_csv<T: CsvRow>(rows: &[T], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(T::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: CsvRow>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Trains one seed with fresh learners and returns its records and learners.
pub fn train_seed(
    config: &ExperimentConfig,
    world: &GridWorld,
    seed: u64,
) -> Result<(Vec<RunRecord>, AnyAgent), HarnessError> {
    config.validate()?;
    let hier = config.hierarchy();
    let mut agent = AnyAgent::new(config.algorithm, config.params(), &hier, world);
    let mut train_rng = LevelRngs::new(config.root_seed, seed, Phase::Train, config.k);
    let mut eval_rng = LevelRngs::new(config.root_seed, seed, Phase::Eval, config.k);
    let mut records = Vec::with_capacity(2 * config.episodes);
    for episode in 0..config.episodes {
        let out = run_episode(&hier, world, &mut agent, config.behaviour, &mut train_rng, config.t_max);
        records.push(RunRecord {
            seed,
            episode,
            phase: Phase::Train,
            steps: out.steps,
            truncated: out.truncated,
        });
        let out = run_eval_episode(&hier, world, &agent, &mut eval_rng, config.t_max);
        records.push(RunRecord {
            seed,
            episode,
            phase: Phase::Eval,
            steps: out.steps,
            truncated: out.truncated,
        });
    }
    Ok((records, agent))
}

/// Records for seeds `0..config.seeds`, sorted by `(seed, episode, phase)`.
/// `workers` caps the thread pool; seeds are the only unit of parallelism.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let world = config.world()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let per_seed: Vec<Vec<RunRecord>> = pool.install(|| {
        (0..config.seeds as u64)
            .into_par_iter()
            .map(|seed| train_seed(config, &world, seed).map(|(r, _)| r))
            .collect::<Result<_, _>>()
    })?;
    let mut records: Vec<RunRecord> = per_seed.into_iter().flatten().collect();
    records.sort();
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    /// Per-episode statistics of `ln(steps)` over the evaluation rows.
    pub episodes: Vec<EpisodeStat>,
    /// Unweighted mean of the per-episode means.
    pub marginal: f64,
    /// Raw steps of the first training episode: mean and standard error.
    pub first_episode_mean: f64,
    pub first_episode_se: f64,
}

impl AggregateReport {
    pub fn first_episode_summary(&self) -> String {
        format!("{:.0} ± {:.0}", self.first_episode_mean, self.first_episode_se)
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(records: &[RunRecord]) -> Result<AggregateReport, HarnessError> {
    let mut by_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut first = Vec::new();
    for r in records {
        match r.phase {
            Phase::Eval => by_episode.entry(r.episode).or_default().push((r.steps as f64).ln()),
            Phase::Train if r.episode == 0 => first.push(r.steps as f64),
            Phase::Train => {}
        }
    }
    if by_episode.is_empty() && first.is_empty() {
        return Err(HarnessError::Empty);
    }
    let episodes: Vec<EpisodeStat> = by_episode
        .into_iter()
        .map(|(episode, logs)| {
            let (mean_log, se_log) = mean_se(&logs);
            EpisodeStat {
                episode,
                mean_log,
                se_log,
                n_seeds: logs.len(),
            }
        })
        .collect();
    let marginal = if episodes.is_empty() {
        f64::NAN
    } else {
        episodes.iter().map(|e| e.mean_log).sum::<f64>() / episodes.len() as f64
    };
    let (first_episode_mean, first_episode_se) = if first.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_se(&first)
    };
    Ok(AggregateReport {
        episodes,
        marginal,
        first_episode_mean,
        first_episode_se,
    })
}

/// `|n or λ| × |k| × |behaviour|` configs for both backup families.
pub fn main_grid(environment: &str) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for behaviour in [Behaviour::FullHierarchy, Behaviour::FlatOnly] {
        for k in 1..=4 {
            for n in [1, 3, 5, 8] {
                let mut c = ExperimentConfig::new(environment, Algorithm::HierTB);
                c.k = k;
                c.n = n;
                c.behaviour = behaviour;
                out.push(c);
            }
            for lambda in [0.0, 0.5, 0.8, 1.0] {
                let mut c = ExperimentConfig::new(environment, Algorithm::HierQLambda);
                c.k = k;
                c.lambda = lambda;
                c.behaviour = behaviour;
                out.push(c);
            }
        }
    }
    out
}

/// Configs whose credit reaches equally far back in primitive time for every
/// `k`: `γ = γ0^(1/H^a_{k-1})` and `n = n0 / H^a_{k-1}` (λ = 1 for the λ family).
pub fn depth_balanced_grid(
    environment: &str,
    gamma0: f64,
    n0: usize,
    k_values: &[usize],
    budget: usize,
) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let mut out = Vec::new();
    for &k in k_values {
        if k == 0 {
            return Err(HarnessError::Zero("k"));
        }
        let horizon = budget.pow(k as u32 - 1);
        if !n0.is_multiple_of(horizon) {
            return Err(HarnessError::NotDivisible { n0, horizon, k });
        }
        let gamma = gamma0.powf(1.0 / horizon as f64);
        let mut tb = ExperimentConfig::new(environment, Algorithm::HierTB);
        tb.k = k;
        tb.budget = budget;
        tb.gamma = gamma;
        tb.n = n0 / horizon;
        let mut lam = ExperimentConfig::new(environment, Algorithm::HierQLambda);
        lam.k = k;
        lam.budget = budget;
        lam.gamma = gamma;
        lam.lambda = 1.0;
        out.push(tb);
        out.push(lam);
    }
    Ok(out)
}

fn cell(world: &GridWorld, s: StateId) -> String {
    let (r, c) = world.coords(s);
    format!("{r}:{c}")
}

fn parse_cell(world: &GridWorld, text: &str) -> Result<StateId, HarnessError> {
    let bad = || HarnessError::Snapshot(format!("bad cell {text:?}"));
    let (r, c) = text.split_once(':').ok_or_else(bad)?;
    let (r, c) = (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
    world.state_at(r, c).ok_or_else(bad)
}

fn action_label(world: &GridWorld, a: LevelAction) -> String {
    match a {
        LevelAction::Primitive(p) => p.name().to_string(),
        LevelAction::Goal(g) => cell(world, g),
    }
}

fn parse_action(world: &GridWorld, text: &str) -> Result<LevelAction, HarnessError> {
    PrimitiveAction::ALL
        .into_iter()
        .find(|p| p.name() == text)
        .map(LevelAction::Primitive)
        .map_or_else(|| parse_cell(world, text).map(LevelAction::Goal), Ok)
}

/// One stored value; cells are written as `row:col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub level: usize,
    pub state: String,
    pub action: String,
    pub goal: String,
    pub value: f64,
}

impl CsvRow for SnapshotRow {
    const HEADER: &'static [&'static str] = &["level", "state", "action", "goal", "value"];
}

/// A decoded snapshot entry.
pub type SnapshotEntry = (usize, StateId, LevelAction, StateId, f64);

pub fn write_snapshot(agent: &AnyAgent, world: &GridWorld, path: &Path) -> Result<(), HarnessError> {
    let mut rows = Vec::new();
    agent.for_each_value(world, |level, s, a, g, v| {
        rows.push(SnapshotRow {
            level,
            state: cell(world, s),
            action: action_label(world, a),
            goal: cell(world, g),
            value: v,
        })
    });
    write_csv(&rows, path)
}

pub fn read_snapshot(world: &GridWorld, path: &Path) -> Result<Vec<SnapshotEntry>, HarnessError> {
    read_csv::<SnapshotRow>(path)?
        .into_iter()
        .map(|r| {
            Ok((
                r.level,
                parse_cell(world, &r.state)?,
                parse_action(world, &r.action)?,
                parse_cell(world, &r.goal)?,
                r.value,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub state_row: usize,
    pub state_col: usize,
    pub level: usize,
    pub greedy_action: String,
}

impl CsvRow for PolicyRow {
    const HEADER: &'static [&'static str] = &["state_row", "state_col", "level", "greedy_action"];
}

/// Greedy action per state and level towards the environment goal. Tied
/// maxima are joined with `|`; a state where every action ties reads `tie`,
/// the goal itself reads `terminal`.
pub fn greedy_policy(world: &GridWorld, entries: impl IntoIterator<Item = SnapshotEntry>) -> Vec<PolicyRow> {
    let mut table: BTreeMap<(usize, StateId), Vec<(LevelAction, f64)>> = BTreeMap::new();
    for (level, s, a, g, v) in entries {
        if g == world.goal() {
            table.entry((level, s)).or_default().push((a, v));
        }
    }
    let mut rows: Vec<PolicyRow> = table
        .into_iter()
        .map(|((level, s), actions)| {
            let (state_row, state_col) = world.coords(s);
            let greedy_action = if s == world.goal() {
                "terminal".to_string()
            } else {
                let max = actions.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
                let best: Vec<String> = actions
                    .iter()
                    .filter(|&&(_, v)| ties_max(v, max))
                    .map(|&(a, _)| action_label(world, a))
                    .collect();
                if best.len() == actions.len() && best.len() > 1 {
                    "tie".to_string()
                } else {
                    best.join("|")
                }
            };
            PolicyRow {
                state_row,
                state_col,
                level,
                greedy_action,
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.state_row, r.state_col, r.level));
    rows
}

pub fn dump_greedy_policy(agent: &AnyAgent, world: &GridWorld, path: &Path) -> Result<(), HarnessError> {
    let mut entries = Vec::new();
    agent.for_each_value(world, |l, s, a, g, v| entries.push((l, s, a, g, v)));
    write_csv(&greedy_policy(world, entries), path)
}
