//! Stochastic search over context trees driven by incremental cost updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{improve_step, Context, FeatureMap, Move, StepOutcome, SuffixSet};
use crate::histories::History;
use crate::mdpcore::{icost_of_counts, CostConfig, CostTracker, MdpError, MovePlan};

/// Which code length the search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    #[default]
    Cost,
    Icost,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Cost => "cost",
            Criterion::Icost => "icost",
        }
    }
}

/// A context tree with its counts and its current score.
#[derive(Debug, Clone)]
pub struct Scored {
    tracker: CostTracker,
    criterion: Criterion,
    score: f64,
}

impl Scored {
    pub fn new(set: SuffixSet, h: &History, config: CostConfig, criterion: Criterion) -> Self {
        let tracker = CostTracker::new(set, h, config);
        let mut out = Self {
            tracker,
            criterion,
            score: 0.0,
        };
        out.rescore();
        out
    }

    fn rescore(&mut self) {
        self.score = match self.criterion {
            Criterion::Cost => self.tracker.cost(),
            Criterion::Icost => self.tracker.icost().total_bits,
        };
    }

    pub fn set(&self) -> &SuffixSet {
        self.tracker.set()
    }

    pub fn tracker(&self) -> &CostTracker {
        &self.tracker
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    /// Current value of the criterion.
    pub fn score(&self) -> f64 {
        self.score
    }

    /// Score change of a move, with the plan that realizes it.
    pub fn difference(&self, mv: &Move) -> Result<(f64, MovePlan), MdpError> {
        let plan = self.tracker.plan(mv)?;
        let d = match self.criterion {
            Criterion::Cost => plan.delta.total(),
            Criterion::Icost => {
                let mut ct = self.tracker.tensor().clone();
                ct.apply(&plan);
                icost_of_counts(&ct, plan.set.description_length(), self.tracker.config()).total_bits - self.score
            }
        };
        Ok((d, plan))
    }

    pub fn apply(&mut self, plan: MovePlan) {
        self.tracker.apply(plan);
        self.rescore();
    }

    pub fn extend(&mut self, h: &History) -> Result<(), MdpError> {
        self.tracker.extend(h)?;
        self.rescore();
        Ok(())
    }

    /// One improvement step at the given temperature; applies the move if
    /// it is accepted.
    pub fn improve<R: Rng + ?Sized>(&mut self, rng: &mut R, temperature: f64) -> StepOutcome {
        let mut plan = None;
        let outcome = improve_step(self.tracker.set(), rng, temperature, |_, mv| {
            let (d, p) = self.difference(mv).expect("proposed moves are valid");
            plan = Some(p);
            d
        });
        if outcome.accepted {
            self.apply(plan.expect("accepted moves were planned"));
        }
        outcome
    }
}

/// Linear cooling from `start` to 1 over `iterations` steps.
pub fn temperature(start: f64, iteration: usize, iterations: usize) -> f64 {
    if iterations <= 1 {
        return 1.0;
    }
    let f = iteration as f64 / (iterations - 1) as f64;
    start + (1.0 - start) * f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub iterations: usize,
    pub criterion: Criterion,
    pub cost: CostConfig,
    /// Initial temperature, cooled linearly to 1; a start of 1 gives the
    /// plain acceptance rule throughout.
    pub temperature_start: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            criterion: Criterion::Cost,
            cost: CostConfig {
                phi_penalty: true,
                ..CostConfig::default()
            },
            temperature_start: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub temperature: f64,
    pub state: Context,
    pub proposal: Option<Move>,
    pub difference: f64,
    pub accepted: bool,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: SuffixSet,
    pub best_score: f64,
    pub last: SuffixSet,
    pub trace: Vec<TraceEntry>,
}

/// Runs the improvement step `iterations` times from `{ε}` on a fixed
/// history, keeping the best tree seen.
pub fn search_phi<R: Rng + ?Sized>(h: &History, config: &SearchConfig, rng: &mut R) -> SearchResult {
    let root = SuffixSet::root(h.alphabet().observations());
    let mut walker = Scored::new(root, h, config.cost, config.criterion);
    let mut best = walker.set().clone();
    let mut best_score = walker.score();
    let mut trace = Vec::with_capacity(config.iterations);
    for i in 0..config.iterations {
        let t = temperature(config.temperature_start, i, config.iterations);
        let step = walker.improve(rng, t);
        if walker.score() < best_score {
            best = walker.set().clone();
            best_score = walker.score();
        }
        trace.push(TraceEntry {
            iteration: i + 1,
            temperature: t,
            state: step.proposal.state,
            proposal: step.candidate,
            difference: step.cost_difference,
            accepted: step.accepted,
            current: walker.score(),
            best: best_score,
        });
    }
    SearchResult {
        best,
        best_score,
        last: walker.set().clone(),
        trace,
    }
}
