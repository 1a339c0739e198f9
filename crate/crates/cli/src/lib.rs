//! Command-line front end: run agents, price feature maps on recorded
//! histories, search for good maps offline and print the tiny-example table.
//!
//! Every command renders its report into a `String`, so the binary is a thin
//! wrapper and the reports can be compared byte for byte in tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use phimdp::agent::{run_experiment_from, AgentConfig, AgentError, CycleRecord};
use phimdp::coding::CodeMode;
use phimdp::environments::{from_name, EnvError, TinyExampleEnv};
use phimdp::features::{FeatureError, Move, SuffixSet};
use phimdp::histories::{Environment, History, HistoryError};
use phimdp::mdpcore::{cost, icost, CostConfig, CostReport, ParameterCount, RewardModel};
use phimdp::planner::ExplorationConfig;
use phimdp::search::{search_phi, Criterion, SearchConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    History { path: PathBuf, source: HistoryError },
    #[error("{path}: {source}")]
    Feature { path: PathBuf, source: FeatureError },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "phimdp", version, about = "Feature reinforcement learning with context-tree state maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the agent in a simulated environment; writes one JSON record per cycle.
    RunAgent(RunAgentArgs),
    /// Price a feature map on a recorded history.
    EvalCost(EvalCostArgs),
    /// Search for a cheap feature map on a recorded history.
    SearchPhi(SearchPhiArgs),
    /// Costs of the depth-k maps on the tiny example next to their closed forms.
    TinyTable(TinyTableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Sparse,
    Combinatorial,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardArg {
    Full,
    StateOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Cost,
    Icost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParameterArg {
    Sparse,
    Literal,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub code_mode: ModeArg,
    /// Prior pseudo-count of the incremental code (0.5 is KT).
    #[arg(long, default_value_t = CodeMode::KT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "state-only")]
    pub reward_model: RewardArg,
    /// Charge the tree size CL(Φ); the default depends on the command.
    #[arg(long)]
    pub phi_penalty: Option<bool>,
    /// How ICost counts the parameters of its reward model.
    #[arg(long, value_enum, default_value = "sparse")]
    pub parameter_count: ParameterArg,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

impl CostArgs {
    fn config(&self, phi_penalty: bool, burn_in: usize) -> Result<CostConfig, CliError> {
        let mode = match self.code_mode {
            ModeArg::Exact => CodeMode::Exact,
            ModeArg::Sparse => CodeMode::Sparse,
            ModeArg::Combinatorial => CodeMode::Combinatorial,
            ModeArg::Incremental => CodeMode::Incremental { alpha: self.alpha },
        };
        mode.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(CostConfig {
            mode,
            reward_model: match self.reward_model {
                RewardArg::Full => RewardModel::Full,
                RewardArg::StateOnly => RewardModel::StateOnly,
            },
            phi_penalty: self.phi_penalty.unwrap_or(phi_penalty),
            parameter_count: match self.parameter_count {
                ParameterArg::Sparse => ParameterCount::Sparse,
                ParameterArg::Literal => ParameterCount::Literal,
            },
            burn_in: self.burn_in.unwrap_or(burn_in),
        })
    }
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::Cost => Criterion::Cost,
        CriterionArg::Icost => Criterion::Icost,
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunAgentArgs {
    /// `tiny` or `chain:L`.
    #[arg(long, default_value = "tiny")]
    pub env: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Improvement steps per cycle.
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    #[arg(long, default_value_t = phimdp::planner::DEFAULT_GAMMA_CAP)]
    pub gamma_cap: f64,
    #[arg(long, value_enum, default_value = "cost")]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = AgentConfig::default().temperature)]
    pub temperature: f64,
    /// Start from the full tree of this depth instead of `{ε}`.
    #[arg(long, default_value_t = 0)]
    pub init_depth: usize,
    /// Plan on the raw estimate, without the exploration state.
    #[arg(long)]
    pub no_explore: bool,
    /// Fixed reward of the exploration state.
    #[arg(long)]
    pub exploration_bonus: Option<f64>,
    /// Independent runs with seeds `seed, seed+1, ...`, run in parallel.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Skip the ICost column (it is the expensive part of the log).
    #[arg(long)]
    pub no_icost: bool,
    /// Also write each replica's history (suffixed `.i` when there are several).
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalCostArgs {
    #[arg(long)]
    pub history: PathBuf,
    /// Suffix set, one member per line.
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SearchPhiArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long, default_value_t = SearchConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cost")]
    pub criterion: CriterionArg,
    /// Cooled linearly to 1 over the run; 1 keeps the plain acceptance rule.
    #[arg(long, default_value_t = SearchConfig::default().temperature_start)]
    pub temperature_start: f64,
    /// Write the best suffix set here as well.
    #[arg(long)]
    pub phi_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TinyTableArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deepest map in the table.
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    /// Use this history instead of simulating one.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cost: CostArgs,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_history(path: &Path) -> Result<History, CliError> {
    History::from_text(&read(path)?).map_err(|source| CliError::History {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_phi(path: &Path, alphabet: usize) -> Result<SuffixSet, CliError> {
    SuffixSet::from_text(&read(path)?, alphabet).map_err(|source| CliError::Feature {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs a command and returns its report; `--out` files are written here too.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let (text, out) = match &cli.command {
        Command::RunAgent(a) => (run_agent(a)?, &a.out),
        Command::EvalCost(a) => (eval_cost(a)?, &a.out),
        Command::SearchPhi(a) => (search(a)?, &a.out),
        Command::TinyTable(a) => (tiny_table(a)?, &a.out),
    };
    match out {
        Some(path) => {
            write(path, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

#[derive(Serialize)]
struct RecordLine<'a> {
    replica: usize,
    #[serde(flatten)]
    record: &'a CycleRecord,
}

#[derive(Serialize)]
struct Summary {
    replica: usize,
    seed: u64,
    env: String,
    cycles: usize,
    states: usize,
    cost_bits: f64,
    adoptions: usize,
    phi: Vec<String>,
    candidate: Vec<String>,
}

#[derive(Serialize)]
struct Header<'a> {
    env: &'a str,
    n: usize,
    replicas: usize,
    init_depth: usize,
    config: &'a AgentConfig,
}

struct Replica {
    records: Vec<CycleRecord>,
    summary: Summary,
    history: History,
}

fn agent_config(a: &RunAgentArgs) -> Result<AgentConfig, CliError> {
    let defaults = AgentConfig::default();
    let mut exploration = if a.no_explore {
        ExplorationConfig::disabled()
    } else {
        ExplorationConfig::default()
    };
    exploration.bonus = a.exploration_bonus;
    Ok(AgentConfig {
        gamma_cap: a.gamma_cap,
        budget: a.budget,
        cost: a.cost.config(defaults.cost.phi_penalty, defaults.cost.burn_in)?,
        criterion: criterion(a.criterion),
        exploration,
        temperature: a.temperature,
        log_icost: !a.no_icost,
        ..defaults
    })
}

fn run_replica(a: &RunAgentArgs, config: AgentConfig, replica: usize) -> Result<Replica, CliError> {
    let seed = a.seed.wrapping_add(replica as u64);
    let config = AgentConfig { seed, ..config };
    let mut env = from_name(&a.env, seed)?;
    let phi = SuffixSet::full(a.init_depth, env.alphabet().observations());
    let (log, agent) = run_experiment_from(&config, env.as_mut(), a.n, phi)?;
    let tracker = agent.current().tracker();
    let members = |s: &SuffixSet| s.members().map(|c| c.to_string()).collect();
    let summary = Summary {
        replica,
        seed,
        env: a.env.clone(),
        cycles: log.records.len(),
        states: tracker.tensor().state_count(),
        cost_bits: tracker.cost(),
        adoptions: agent.adoptions().len(),
        phi: members(agent.phi()),
        candidate: members(agent.candidate()),
    };
    Ok(Replica {
        records: log.records,
        summary,
        history: agent.history().clone(),
    })
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialize")
}

/// JSON lines: a header with the exact configuration, one record per cycle
/// and replica, and one summary per replica, ordered by replica index.
pub fn run_agent(a: &RunAgentArgs) -> Result<String, CliError> {
    if a.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let config = agent_config(a)?;
    // fail on a bad environment name before spawning anything
    from_name(&a.env, a.seed)?;

    let results: Vec<Result<Replica, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..a.replicas)
            .map(|i| scope.spawn(move || run_replica(a, config, i)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
    });

    let mut out = String::new();
    let header = Header {
        env: &a.env,
        n: a.n,
        replicas: a.replicas,
        init_depth: a.init_depth,
        config: &config,
    };
    let _ = writeln!(out, "{}", json(&serde_json::json!({ "header": header })));
    for (i, result) in results.into_iter().enumerate() {
        let replica = result?;
        for record in &replica.records {
            let _ = writeln!(out, "{}", json(&RecordLine { replica: i, record }));
        }
        let _ = writeln!(out, "{}", json(&serde_json::json!({ "summary": replica.summary })));
        if let Some(path) = &a.history_out {
            let path = if a.replicas == 1 {
                path.clone()
            } else {
                PathBuf::from(format!("{}.{i}", path.display()))
            };
            write(&path, &replica.history.to_text())?;
        }
    }
    Ok(out)
}

fn icost_lines(out: &mut String, h: &History, phi: &SuffixSet, config: &CostConfig) {
    let ic = icost(phi, h, config);
    let _ = writeln!(out, "icost_reward_bits={:.6}", ic.reward_bits);
    let _ = writeln!(out, "icost_parameters={}", ic.parameters);
    let _ = writeln!(out, "icost_parameter_bits={:.6}", ic.parameter_bits);
    let _ = writeln!(out, "icost_phi_bits={:.6}", ic.phi_bits);
    let _ = writeln!(out, "icost_total_bits={:.6}", ic.total_bits);
}

/// The cost report followed by the ICost breakdown.
pub fn eval_cost(a: &EvalCostArgs) -> Result<String, CliError> {
    let h = load_history(&a.history)?;
    let phi = load_phi(&a.phi, h.alphabet().observations())?;
    let config = a.cost.config(false, 0)?;
    let mut out = cost(&phi, &h, &config).to_text();
    let _ = writeln!(out, "parameter_count={}", config.parameter_count.name());
    icost_lines(&mut out, &h, &phi, &config);
    Ok(out)
}

fn move_text(mv: &Option<Move>) -> String {
    match mv {
        Some(Move::Split(c)) => format!("split:{c}"),
        Some(Move::Merge(c)) => format!("merge:{c}"),
        None => "none".into(),
    }
}

pub fn search(a: &SearchPhiArgs) -> Result<String, CliError> {
    let h = load_history(&a.history)?;
    let defaults = SearchConfig::default();
    let config = SearchConfig {
        iterations: a.iterations,
        criterion: criterion(a.criterion),
        cost: a.cost.config(defaults.cost.phi_penalty, defaults.cost.burn_in)?,
        temperature_start: a.temperature_start,
    };
    let result = search_phi(&h, &config, &mut ChaCha8Rng::seed_from_u64(a.seed));

    let mut out = String::new();
    let c = &config.cost;
    let _ = writeln!(out, "criterion={}", config.criterion.name());
    let _ = writeln!(out, "code_mode={}", c.mode.name());
    if let CodeMode::Incremental { alpha } = c.mode {
        let _ = writeln!(out, "alpha={alpha}");
    }
    let _ = writeln!(out, "reward_model={}", c.reward_model.name());
    let _ = writeln!(out, "phi_penalty={}", c.phi_penalty);
    let _ = writeln!(out, "parameter_count={}", c.parameter_count.name());
    let _ = writeln!(out, "burn_in={}", c.burn_in);
    let _ = writeln!(out, "iterations={}", config.iterations);
    let _ = writeln!(out, "seed={}", a.seed);
    let _ = writeln!(out, "temperature_start={}", config.temperature_start);
    let _ = writeln!(out, "cycles={}", h.len());
    let _ = writeln!(out, "best_bits={:.6}", result.best_score);
    let _ = writeln!(out, "best_states={}", result.best.len());
    let _ = writeln!(out, "best_depth={}", result.best.depth());
    let members: Vec<String> = result.best.members().map(|m| m.to_string()).collect();
    let _ = writeln!(out, "best_phi={}", members.join(" "));
    for t in &result.trace {
        let _ = writeln!(
            out,
            "trace iteration={} temperature={:.6} state={} move={} difference={:.6} accepted={} current={:.6} best={:.6}",
            t.iteration,
            t.temperature,
            t.state,
            move_text(&t.proposal),
            t.difference,
            t.accepted,
            t.current,
            t.best
        );
    }
    if let Some(path) = &a.phi_out {
        write(path, &result.best.to_text())?;
    }
    Ok(out)
}

/// Closed-form cost of the depth-`k` map on the tiny example after `n`
/// transitions: `2n + 3/2 log n`, `2n + 4 log(n/2)`, and
/// `n + 2^(k-1) (2^k + 2) log(n / 2^k)` from depth 2 on.
pub fn tiny_closed_form(k: usize, n: f64) -> f64 {
    match k {
        0 => 2.0 * n + 1.5 * n.log2(),
        1 => 2.0 * n + 4.0 * (n / 2.0).log2(),
        _ => {
            let m = (1u64 << k) as f64;
            n + m / 2.0 * (m + 2.0) * (n / m).log2()
        }
    }
}

/// One row of the tiny-example table.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyRow {
    pub k: usize,
    pub report: CostReport,
    pub closed_form: f64,
}

/// Simulates `n` cycles of the tiny example (its only action is 0).
pub fn tiny_history(n: usize, seed: u64) -> History {
    let mut env = TinyExampleEnv::new(seed);
    let mut h = History::new(env.alphabet().clone());
    if n == 0 {
        return h;
    }
    let p = env.reset();
    h.begin(p.observation, p.reward).expect("valid percept");
    for _ in 1..n {
        let p = env.step(0).expect("action 0 exists");
        h.append_cycle(0, p.observation, p.reward).expect("valid percept");
    }
    h
}

/// Costs of `Φ_0 .. Φ_max_depth` on `h`; the closed forms are evaluated at
/// the number of coded transitions.
pub fn tiny_rows(h: &History, max_depth: usize, config: &CostConfig) -> Vec<TinyRow> {
    (0..=max_depth)
        .map(|k| {
            let phi = SuffixSet::full(k, h.alphabet().observations());
            let report = cost(&phi, h, config);
            let closed_form = tiny_closed_form(k, report.transitions as f64);
            TinyRow { k, report, closed_form }
        })
        .collect()
}

pub fn tiny_argmin(rows: &[TinyRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.report.total_bits < rows[best].report.total_bits {
            best = i;
        }
    }
    rows[best].k
}

pub fn tiny_table(a: &TinyTableArgs) -> Result<String, CliError> {
    let h = match &a.history {
        Some(path) => load_history(path)?,
        None => {
            if a.n < 16 {
                return Err(CliError::Usage(format!("--n must be at least 16, got {}", a.n)));
            }
            tiny_history(a.n, a.seed)
        }
    };
    if a.max_depth > 16 {
        return Err(CliError::Usage("--max-depth is limited to 16".into()));
    }
    // every map codes the same cycles: those where the deepest one is defined
    let config = a.cost.config(false, a.max_depth.saturating_sub(1))?;
    let rows = tiny_rows(&h, a.max_depth, &config);

    let mut out = String::new();
    let _ = writeln!(out, "cycles={}", h.len());
    if a.history.is_none() {
        let _ = writeln!(out, "seed={}", a.seed);
    }
    let _ = writeln!(out, "code_mode={}", config.mode.name());
    if let CodeMode::Incremental { alpha } = config.mode {
        let _ = writeln!(out, "alpha={alpha}");
    }
    let _ = writeln!(out, "reward_model={}", config.reward_model.name());
    let _ = writeln!(out, "phi_penalty={}", config.phi_penalty);
    let _ = writeln!(out, "burn_in={}", config.burn_in);
    for r in &rows {
        let rel = (r.report.total_bits - r.closed_form) / r.closed_form;
        let _ = writeln!(
            out,
            "k={} states={} transitions={} state_bits={:.6} reward_bits={:.6} cost_bits={:.6} closed_form_bits={:.6} relative_difference={:.6}",
            r.k,
            r.report.states,
            r.report.transitions,
            r.report.state_bits,
            r.report.reward_bits,
            r.report.total_bits,
            r.closed_form,
            rel
        );
    }
    let _ = writeln!(out, "argmin={}", tiny_argmin(&rows));
    Ok(out)
}
