//! `topk-bandit`: hardness reports, single runs, experiment sweeps,
//! lower-bound tables and instance generation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use topk_core::experiment::{load_config_file, run_algorithm, run_experiment, ExperimentConfig, TrialSeeds};
use topk_core::{aggregate_regret, format_means, hardness, optimal_coin_error};

#[derive(Parser)]
#[command(name = "topk-bandit", version, about = "Epsilon-top-K arm identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the hardness quantities of an instance as JSON.
    Hardness(Common),
    /// Run one algorithm once and print the selection as JSON.
    Run(Common),
    /// Run a seeded sweep over algorithms and budgets; CSV by default.
    Experiment(Common),
    /// Tabulate the exact optimal coin-tossing error as `m,exact_error`.
    Lowerbound(LowerboundArgs),
    /// Write the means of a generated instance, one per line.
    Gen(Common),
}

/// Shared instance and experiment options. Flags override `--config`.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `two-group`, `uniform`, `synthetic`, or a path to a mean file.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Exponent of the synthetic family.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated, strictly increasing pull budgets.
    #[arg(long)]
    budgets: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, env = "TOPK_BANDIT_SEED")]
    seed: Option<u64>,
    /// adaptive, adaptive-fb, improved, uniform, cb-ar or optmai.
    #[arg(long = "algo")]
    algorithms: Vec<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV (experiment only).
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Comma-separated toss counts.
    #[arg(long, default_value = "100,200,400,800,1600")]
    m: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

impl Common {
    fn pairs(&self) -> CliResult<BTreeMap<String, String>> {
        let mut pairs = match &self.config {
            Some(path) => load_config_file(path).map_err(|e| e.to_string())?,
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v);
            }
        };
        set("instance", self.instance.clone());
        set("n", self.n.map(|v| v.to_string()));
        set("k", self.k.map(|v| v.to_string()));
        set("p", self.p.map(|v| v.to_string()));
        set("epsilon", self.epsilon.map(|v| v.to_string()));
        set("delta", self.delta.map(|v| v.to_string()));
        set("budgets", self.budgets.clone());
        set("trials", self.trials.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("workers", self.workers.map(|v| v.to_string()));
        if !self.algorithms.is_empty() {
            set("algorithms", Some(self.algorithms.join(",")));
        }
        Ok(pairs)
    }

    fn config(&self) -> CliResult<ExperimentConfig> {
        ExperimentConfig::from_pairs(&self.pairs()?).map_err(|e| e.to_string())
    }

    /// Instance, K and epsilon only; budget and algorithm keys are ignored.
    fn instance(&self) -> CliResult<(Vec<f64>, usize, f64)> {
        let mut pairs = self.pairs()?;
        pairs.remove("budgets");
        pairs.insert("algorithms".into(), "adaptive".into());
        let cfg = ExperimentConfig::from_pairs(&pairs).map_err(|e| e.to_string())?;
        let means = cfg.instance.means().map_err(|e| e.to_string())?;
        Ok((means, cfg.k, cfg.epsilon))
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn to_json(value: serde_json::Value) -> CliResult<String> {
    serde_json::to_string_pretty(&value).map(|s| s + "\n").map_err(|e| e.to_string())
}

fn cmd_hardness(args: &Common) -> CliResult<()> {
    let (means, k, eps) = args.instance()?;
    let report = hardness(&means, k, eps).map_err(|e| e.to_string())?;
    emit(args.out.as_ref(), &to_json(json!(report))?)
}

fn cmd_run(args: &Common) -> CliResult<()> {
    let cfg = args.config()?;
    let algorithm = cfg.algorithms[0];
    let budget = if algorithm.uses_budget() {
        *cfg.budgets.first().ok_or("this algorithm needs --budgets")?
    } else {
        0
    };
    let means = cfg.instance.means().map_err(|e| e.to_string())?;
    let seeds = TrialSeeds::derive(cfg.base_seed, 0, budget);
    let result = run_algorithm(algorithm, &means, cfg.k, cfg.epsilon, cfg.delta, budget, seeds)
        .map_err(|e| e.to_string())?;
    let regret = aggregate_regret(&means, cfg.k, &result.selected).map_err(|e| e.to_string())?;
    let body = json!({
        "algorithm": algorithm.name(),
        "budget": budget,
        "seed": cfg.base_seed,
        "regret": regret,
        "failed": regret > cfg.epsilon,
        "result": result,
    });
    emit(args.out.as_ref(), &to_json(body)?)
}

fn cmd_experiment(args: &Common) -> CliResult<()> {
    let cfg = args.config()?;
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let text = if args.json { report.to_json() } else { report.to_csv() }.map_err(|e| e.to_string())?;
    emit(args.out.as_ref(), &text)
}

fn cmd_lowerbound(args: &LowerboundArgs) -> CliResult<()> {
    let mut text = String::from("m,exact_error\n");
    for m in args.m.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: u64 = m.parse().map_err(|_| format!("bad toss count `{m}`"))?;
        let e = optimal_coin_error(m, args.eta).map_err(|e| e.to_string())?;
        text.push_str(&format!("{m},{:e}\n", e.error));
    }
    emit(args.out.as_ref(), &text)
}

fn cmd_gen(args: &Common) -> CliResult<()> {
    let (means, _, _) = args.instance()?;
    emit(args.out.as_ref(), &format_means(&means))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Hardness(a) => cmd_hardness(a),
        Command::Run(a) => cmd_run(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Lowerbound(a) => cmd_lowerbound(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
