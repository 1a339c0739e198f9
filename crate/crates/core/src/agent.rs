//! The ΦMDP agent: improve the feature map while acting, estimate the MDP it
//! induces, plan, and act greedily.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SuffixSet;
use crate::histories::{Action, Alphabet, Environment, History, HistoryError, Percept};
use crate::mdpcore::{estimate_mdp, CostConfig, MdpError};
use crate::planner::{
    best_action, extend_exploration, value_iteration, ExplorationConfig, PlannerError, ValueFunction,
    DEFAULT_GAMMA_CAP, DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE,
};
use crate::search::{Criterion, Scored};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("gamma cap must lie in [0, 1), got {0}")]
    InvalidGammaCap(f64),
    #[error("feature map is over {phi} observations but the environment has {env}")]
    AlphabetMismatch { phi: usize, env: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// `γ_n = min(1 - 1/n, gamma_cap)`.
    pub gamma_cap: f64,
    /// Improvement steps on the candidate map per cycle.
    pub budget: usize,
    pub cost: CostConfig,
    pub criterion: Criterion,
    pub exploration: ExplorationConfig,
    /// Temperature of the candidate's acceptance rule. At 1 the first split
    /// of `{ε}` is an uphill move of order `log n` bits and is practically
    /// never taken; slightly above 1 it is, and the penalty on tree size
    /// still keeps the candidate from wandering off.
    pub temperature: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Record `ICost` of the current map every cycle.
    pub log_icost: bool,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma_cap: DEFAULT_GAMMA_CAP,
            budget: 20,
            cost: CostConfig {
                phi_penalty: true,
                ..CostConfig::default()
            },
            criterion: Criterion::Cost,
            exploration: ExplorationConfig::default(),
            temperature: 1.5,
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            log_icost: true,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn gamma(&self, n: usize) -> f64 {
        (1.0 - 1.0 / n as f64).min(self.gamma_cap)
    }
}

/// What happened in one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub o: usize,
    pub r: usize,
    pub a: usize,
    pub states: usize,
    pub cost_bits: f64,
    pub icost_bits: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    history: History,
    current: Scored,
    candidate: Scored,
    rng: ChaCha8Rng,
    pending: Option<Action>,
    value: Option<ValueFunction>,
    adoptions: Vec<(usize, f64)>,
}

impl Agent {
    pub fn new(alphabet: Alphabet, config: AgentConfig) -> Result<Self, AgentError> {
        let root = SuffixSet::root(alphabet.observations());
        Self::with_phi(alphabet, config, root)
    }

    /// Starts from `phi` instead of `{ε}`; both the current and the candidate
    /// map begin there.
    pub fn with_phi(alphabet: Alphabet, config: AgentConfig, phi: SuffixSet) -> Result<Self, AgentError> {
        if !(0.0..1.0).contains(&config.gamma_cap) {
            return Err(AgentError::InvalidGammaCap(config.gamma_cap));
        }
        if phi.alphabet() != alphabet.observations() {
            return Err(AgentError::AlphabetMismatch {
                phi: phi.alphabet(),
                env: alphabet.observations(),
            });
        }
        let history = History::new(alphabet);
        let current = Scored::new(phi, &history, config.cost, config.criterion);
        Ok(Self {
            candidate: current.clone(),
            current,
            history,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            pending: None,
            value: None,
            adoptions: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn phi(&self) -> &SuffixSet {
        self.current.set()
    }

    pub fn candidate(&self) -> &SuffixSet {
        self.candidate.set()
    }

    pub fn current(&self) -> &Scored {
        &self.current
    }

    pub fn value_function(&self) -> Option<&ValueFunction> {
        self.value.as_ref()
    }

    /// `(cycle, score)` at every adoption of the candidate.
    pub fn adoptions(&self) -> &[(usize, f64)] {
        &self.adoptions
    }

    /// Improves the candidate on the history so far, adopting it whenever it
    /// is strictly better than the current map.
    fn search(&mut self) {
        let cycle = self.history.len() + 1;
        for _ in 0..self.config.budget {
            self.candidate.improve(&mut self.rng, self.config.temperature);
            if self.candidate.score() < self.current.score() {
                self.current = self.candidate.clone();
                self.adoptions.push((cycle, self.current.score()));
            }
        }
    }

    /// Takes the percept of cycle `n` and returns the action `a_n`.
    pub fn cycle(&mut self, percept: Percept) -> Result<CycleRecord, AgentError> {
        if !self.history.is_empty() {
            self.search();
        }
        match self.pending {
            None => self.history.begin(percept.observation, percept.reward)?,
            Some(a) => self.history.append_cycle(a, percept.observation, percept.reward)?,
        }
        self.current.extend(&self.history)?;
        self.candidate.extend(&self.history)?;

        let n = self.history.len();
        let gamma = self.config.gamma(n);
        let ct = self.current.tracker().tensor();
        let est = if self.config.exploration.enabled {
            extend_exploration(ct, &self.config.exploration, gamma)?
        } else {
            estimate_mdp(ct)
        };
        let vf = value_iteration(&est, gamma, self.config.tolerance, self.config.max_sweeps)?;
        let (a, value) = match ct.current_state().map(|id| ct.label(id)).and_then(|l| est.index_of(l)) {
            Some(s) => (best_action(&vf, s)?, vf.v[s]),
            // burn-in cycles have no state yet
            None => (0, 0.0),
        };
        let tracker = self.current.tracker();
        let record = CycleRecord {
            cycle: n,
            o: percept.observation,
            r: percept.reward,
            a,
            states: ct.state_count(),
            cost_bits: tracker.cost(),
            icost_bits: self.config.log_icost.then(|| tracker.icost().total_bits),
            value,
        };
        self.value = Some(vf);
        self.pending = Some(a);
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: AgentConfig,
    pub records: Vec<CycleRecord>,
    /// Final feature map, one member per line.
    pub phi: String,
    pub candidate: String,
}

/// Runs the agent against `env` for `cycles` cycles.
pub fn run_experiment(config: &AgentConfig, env: &mut dyn Environment, cycles: usize) -> Result<(RunLog, Agent), AgentError> {
    let root = SuffixSet::root(env.alphabet().observations());
    run_experiment_from(config, env, cycles, root)
}

/// [`run_experiment`] starting from the feature map `phi`.
pub fn run_experiment_from(
    config: &AgentConfig,
    env: &mut dyn Environment,
    cycles: usize,
    phi: SuffixSet,
) -> Result<(RunLog, Agent), AgentError> {
    let mut agent = Agent::with_phi(env.alphabet().clone(), *config, phi)?;
    let mut records = Vec::with_capacity(cycles);
    if cycles > 0 {
        let mut percept = env.reset();
        for i in 0..cycles {
            let record = agent.cycle(percept)?;
            let a = record.a;
            records.push(record);
            if i + 1 < cycles {
                percept = env.step(a)?;
            }
        }
    }
    let log = RunLog {
        config: *config,
        records,
        phi: agent.phi().to_text(),
        candidate: agent.candidate().to_text(),
    };
    Ok((log, agent))
}
