//! Seeded Monte Carlo experiments over algorithms and budgets.
//!
//! Every `(trial, budget)` pair derives its own seed from the base seed, so
//! results do not depend on grid order or worker count. Each trial runs on a
//! fresh environment with arm identities shuffled.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptiveTopK;
use crate::baselines::{cb_accept_reject_topk, uniform_topk};
use crate::env::{ArmEnvironment, ArmSampler};
use crate::error::{check_positive, check_unit_interval_open, BanditError, Result};
use crate::hardness::{aggregate_regret, compensated_sum};
use crate::improved::{opt_mai, ImprovedTopK};
use crate::instances::{gen_synthetic_p, gen_two_group, gen_uniform, load_means};
use crate::selection::SelectionResult;

/// Where the arm means come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    TwoGroup { n: usize, k: usize },
    Uniform { n: usize },
    SyntheticP { n: usize, k: usize, p: f64 },
    File { path: PathBuf },
}

impl InstanceSpec {
    /// Means sorted by rank, best first for the generators.
    pub fn means(&self) -> Result<Vec<f64>> {
        match self {
            InstanceSpec::TwoGroup { n, k } => gen_two_group(*n, *k),
            InstanceSpec::Uniform { n } => gen_uniform(*n),
            InstanceSpec::SyntheticP { n, k, p } => gen_synthetic_p(*n, *k, *p),
            InstanceSpec::File { path } => load_means(path),
        }
    }

    /// Interprets `name` as a generator (`two-group`, `uniform`, `synthetic`)
    /// or, failing that, as a path to a mean file.
    pub fn from_parts(name: &str, n: usize, k: usize, p: Option<f64>) -> Result<Self> {
        Ok(match name {
            "two-group" => InstanceSpec::TwoGroup { n, k },
            "uniform" => InstanceSpec::Uniform { n },
            "synthetic" => InstanceSpec::SyntheticP {
                n,
                k,
                p: p.ok_or_else(|| BanditError::Config("the synthetic family needs p".into()))?,
            },
            path => InstanceSpec::File { path: PathBuf::from(path) },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Adaptive,
    AdaptiveFb,
    Improved,
    Uniform,
    CbAr,
    #[serde(rename = "optmai")]
    OptMai,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Adaptive,
        Algorithm::AdaptiveFb,
        Algorithm::Improved,
        Algorithm::Uniform,
        Algorithm::CbAr,
        Algorithm::OptMai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adaptive => "adaptive",
            Algorithm::AdaptiveFb => "adaptive-fb",
            Algorithm::Improved => "improved",
            Algorithm::Uniform => "uniform",
            Algorithm::CbAr => "cb-ar",
            Algorithm::OptMai => "optmai",
        }
    }

    /// Whether the algorithm consumes a pull budget. The others run to their
    /// own stopping rule and get a single report row with budget 0.
    pub fn uses_budget(self) -> bool {
        matches!(self, Algorithm::AdaptiveFb | Algorithm::Uniform | Algorithm::CbAr)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BanditError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BanditError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub k: usize,
    /// Regret threshold for counting a trial as failed.
    pub epsilon: f64,
    pub delta: f64,
    pub algorithms: Vec<Algorithm>,
    pub budgets: Vec<u64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Keep per-trial outcomes in the report.
    pub keep_outcomes: bool,
}

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_N: usize = 1000;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BanditError::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(BanditError::Config("no algorithms selected".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BanditError::Config("budgets must be strictly increasing".into()));
        }
        if self.algorithms.iter().any(|a| a.uses_budget()) && self.budgets.is_empty() {
            return Err(BanditError::Config("fixed-budget algorithms need a budget grid".into()));
        }
        check_positive("epsilon", self.epsilon)?;
        check_unit_interval_open("delta", self.delta)?;
        Ok(())
    }

    /// Builds a configuration from `key = value` pairs, filling defaults.
    ///
    /// Keys: `instance`, `n`, `k`, `p`, `epsilon`, `delta`, `algorithms`
    /// (comma list), `budgets` (comma list), `trials`, `seed`, `workers`,
    /// `keep_outcomes`.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for key in pairs.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(BanditError::Config(format!("unknown key `{key}`")));
            }
        }
        fn get<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
            pairs
                .get(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|_| BanditError::Config(format!("bad value `{v}` for `{key}`")))
                })
                .transpose()
        }
        let n = get::<usize>(pairs, "n")?.unwrap_or(DEFAULT_N);
        let k = get::<usize>(pairs, "k")?.unwrap_or((n / 10).max(1));
        let name = pairs.get("instance").map(String::as_str).unwrap_or("two-group");
        let instance = InstanceSpec::from_parts(name, n, k, get::<f64>(pairs, "p")?)?;
        let algorithms = match pairs.get("algorithms") {
            Some(list) => split_list(list).map(str::parse).collect::<Result<Vec<Algorithm>>>()?,
            None => vec![Algorithm::AdaptiveFb],
        };
        let budgets = match pairs.get("budgets") {
            Some(list) => parse_budgets(list)?,
            None => Vec::new(),
        };
        let cfg = Self {
            instance,
            k,
            epsilon: get(pairs, "epsilon")?.unwrap_or(DEFAULT_EPSILON),
            delta: get(pairs, "delta")?.unwrap_or(DEFAULT_DELTA),
            algorithms,
            budgets,
            trials: get(pairs, "trials")?.unwrap_or(DEFAULT_TRIALS),
            base_seed: get(pairs, "seed")?.unwrap_or(0),
            workers: get(pairs, "workers")?.unwrap_or(0),
            keep_outcomes: get(pairs, "keep_outcomes")?.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "instance",
    "n",
    "k",
    "p",
    "epsilon",
    "delta",
    "algorithms",
    "budgets",
    "trials",
    "seed",
    "workers",
    "keep_outcomes",
];

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

/// Parses a comma-separated budget list such as `10000, 50000`.
pub fn parse_budgets(s: &str) -> Result<Vec<u64>> {
    split_list(s)
        .map(|b| {
            b.replace('_', "")
                .parse::<u64>()
                .map_err(|_| BanditError::Config(format!("bad budget `{b}`")))
        })
        .collect()
}

/// Reads a flat `key = value` file. `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| BanditError::Parse {
            line: lineno + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BanditError::Io(format!("{}: {e}", path.display())))?;
    parse_config_file(&text)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds used by one trial at one budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub shuffle: u64,
    pub env: u64,
    pub algorithm: u64,
}

impl TrialSeeds {
    pub fn derive(base_seed: u64, trial: usize, budget: u64) -> Self {
        let t = mix_seed(base_seed, trial as u64);
        let b = mix_seed(t, budget);
        Self {
            shuffle: mix_seed(t, 0x5348_5546),
            env: mix_seed(b, 0x0045_4e56),
            algorithm: mix_seed(b, 0x0041_4c47),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub regret: f64,
    pub failed: bool,
    pub total_pulls: u64,
}

/// Runs one algorithm once on `means` (already in arm order).
pub fn run_algorithm(
    algorithm: Algorithm,
    means: &[f64],
    k: usize,
    epsilon: f64,
    delta: f64,
    budget: u64,
    seeds: TrialSeeds,
) -> Result<SelectionResult> {
    let mut env = ArmEnvironment::from_means(means, seeds.env)?;
    match algorithm {
        Algorithm::Adaptive => Ok(AdaptiveTopK::new(k, delta)?.run(&mut env, epsilon)?.result),
        Algorithm::AdaptiveFb => Ok(AdaptiveTopK::new(k, delta)?.run_fixed_budget(&mut env, budget)?.result),
        Algorithm::Improved => {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds.algorithm);
            Ok(ImprovedTopK::new(k, epsilon, delta)?.run(&mut env, &mut rng)?.result)
        }
        Algorithm::Uniform => uniform_topk(&mut env, k, budget),
        Algorithm::CbAr => cb_accept_reject_topk(&mut env, k, budget),
        Algorithm::OptMai => {
            let arms: Vec<usize> = (0..means.len()).collect();
            let (mut selected, _) = opt_mai(&mut env, &arms, k, epsilon, delta)?;
            selected.sort_unstable();
            let per_arm_pulls = env.pull_counts().to_vec();
            Ok(SelectionResult {
                selected,
                total_pulls: env.total_pulls(),
                per_arm_pulls,
                rounds_completed: 1,
                accepted_early: Vec::new(),
                rejected: Vec::new(),
            })
        }
    }
}

/// Trial `trial` of `algorithm` at `budget`: shuffle, run, score.
pub fn run_trial(cfg: &ExperimentConfig, ranked_means: &[f64], algorithm: Algorithm, budget: u64, trial: usize) -> Result<TrialOutcome> {
    let seeds = TrialSeeds::derive(cfg.base_seed, trial, budget);
    let mut means = ranked_means.to_vec();
    means.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds.shuffle));
    let result = run_algorithm(algorithm, &means, cfg.k, cfg.epsilon, cfg.delta, budget, seeds)?;
    let regret = aggregate_regret(&means, cfg.k, &result.selected)?;
    Ok(TrialOutcome {
        trial,
        regret,
        failed: regret > cfg.epsilon,
        total_pulls: result.total_pulls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    /// 0 for algorithms that do not take a budget.
    pub budget: u64,
    pub trials: usize,
    pub failures: usize,
    pub failure_probability: f64,
    pub mean_regret: f64,
    /// Sample standard deviation (0 for a single trial).
    pub regret_std: f64,
    pub mean_total_pulls: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<TrialOutcome>>,
}

impl ReportRow {
    pub fn from_outcomes(algorithm: Algorithm, budget: u64, outcomes: Vec<TrialOutcome>, keep: bool) -> Self {
        let trials = outcomes.len();
        let failures = outcomes.iter().filter(|o| o.failed).count();
        let nf = trials as f64;
        let mean_regret = compensated_sum(outcomes.iter().map(|o| o.regret)) / nf;
        let regret_std = if trials > 1 {
            (compensated_sum(outcomes.iter().map(|o| (o.regret - mean_regret).powi(2))) / (nf - 1.0)).sqrt()
        } else {
            0.0
        };
        let mean_total_pulls = compensated_sum(outcomes.iter().map(|o| o.total_pulls as f64)) / nf;
        Self {
            algorithm,
            budget,
            trials,
            failures,
            failure_probability: failures as f64 / nf,
            mean_regret,
            regret_std,
            mean_total_pulls,
            outcomes: keep.then_some(outcomes),
        }
    }

    /// Binomial standard error of the failure probability.
    pub fn failure_std_error(&self) -> f64 {
        let p = self.failure_probability;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: [&str; 8] = [
    "algorithm",
    "budget",
    "trials",
    "failures",
    "failure_probability",
    "mean_regret",
    "regret_std",
    "mean_total_pulls",
];

impl ExperimentReport {
    pub fn row(&self, algorithm: Algorithm, budget: u64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.budget == budget)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| BanditError::Io(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.name().to_string(),
                r.budget.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
                r.failure_probability.to_string(),
                r.mean_regret.to_string(),
                r.regret_std.to_string(),
                r.mean_total_pulls.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| BanditError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| BanditError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| BanditError::Io(e.to_string()))
    }
}

/// Runs every `(algorithm, budget)` pair for `cfg.trials` trials.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ranked = cfg.instance.means()?;
    if cfg.k == 0 || cfg.k > ranked.len() {
        return Err(BanditError::InvalidK { k: cfg.k, n: ranked.len() });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BanditError::Config(e.to_string()))?;

    let mut jobs: Vec<(Algorithm, u64)> = Vec::new();
    for &alg in &cfg.algorithms {
        if alg.uses_budget() {
            jobs.extend(cfg.budgets.iter().map(|&b| (alg, b)));
        } else {
            jobs.push((alg, 0));
        }
    }
    let mut rows = Vec::with_capacity(jobs.len());
    for (alg, budget) in jobs {
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|trial| run_trial(cfg, &ranked, alg, budget, trial))
                .collect::<Result<Vec<_>>>()
        })?;
        rows.push(ReportRow::from_outcomes(alg, budget, outcomes, cfg.keep_outcomes));
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
    })
}
