//! Count statistics of the MDP induced by a feature map, its code-length
//! criteria (`Cost` and `ICost`), frequency estimates, and incremental cost
//! updates for split/merge moves of a context tree.
//!
//! State ids are assigned in order of first appearance, and every sum runs
//! over ordered maps, so results do not depend on hashing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rustc_hash::{FxHashMap, FxHashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{code_length_sparse, model_bits, CodeMode, CodingError};
use crate::features::{Context, FeatureError, FeatureMap, Move, SuffixSet};
use crate::histories::{Action, Alphabet, History, Observation, Reward};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("history of length {history} does not extend the {tensor} counted cycles")]
    NotAnExtension { history: usize, tensor: usize },
}

/// How rewards are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardModel {
    /// One block per `(s, a, s')`.
    Full,
    /// One block per destination state `s'`.
    #[default]
    StateOnly,
}

impl RewardModel {
    pub fn name(&self) -> &'static str {
        match self {
            RewardModel::Full => "full",
            RewardModel::StateOnly => "state-only",
        }
    }
}

/// Number of free parameters charged by `ICost`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterCount {
    /// Non-zero estimated entries minus one normalization per visited row.
    #[default]
    Sparse,
    /// `m (m - 1) |A| (|R| - 1)`.
    Literal,
}

impl ParameterCount {
    pub fn name(&self) -> &'static str {
        match self {
            ParameterCount::Sparse => "sparse",
            ParameterCount::Literal => "literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostConfig {
    pub mode: CodeMode,
    pub reward_model: RewardModel,
    /// Add `CL(Φ)` to the cost.
    pub phi_penalty: bool,
    pub parameter_count: ParameterCount,
    /// Number of leading cycles that only provide context: states are taken
    /// from cycle `burn_in + 1` on and transitions from `burn_in + 2` on.
    pub burn_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct BlockStat {
    total: u64,
    nonzero: usize,
}

type Cell = (usize, usize, usize, usize);

/// Transition/reward counts `n_{ss'}^{ar'}` of a feature map on a history.
///
/// Keeps the state of every counted cycle, so the tensor can be relabeled
/// when the feature map changes and extended when the history grows.
#[derive(Debug, Clone)]
pub struct CountTensor {
    alphabet: Alphabet,
    burn_in: usize,
    observations: Vec<Observation>,
    actions: Vec<Action>,
    rewards: Vec<Reward>,
    labels: Vec<Context>,
    index: HashMap<Context, usize>,
    /// `trace[i]` is the state id at cycle `burn_in + 1 + i`.
    trace: Vec<usize>,
    /// Cycles spent in each state, ascending.
    occurrences: Vec<Vec<usize>>,
    realized: usize,
    cells: BTreeMap<Cell, u64>,
    sas: BTreeMap<(usize, usize, usize), u64>,
    sa: BTreeMap<(usize, usize), BlockStat>,
    dest: BTreeMap<(usize, usize), u64>,
}

impl CountTensor {
    pub fn empty(alphabet: Alphabet, burn_in: usize) -> Self {
        Self {
            alphabet,
            burn_in,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            labels: Vec::new(),
            index: HashMap::new(),
            trace: Vec::new(),
            occurrences: Vec::new(),
            realized: 0,
            cells: BTreeMap::new(),
            sas: BTreeMap::new(),
            sa: BTreeMap::new(),
            dest: BTreeMap::new(),
        }
    }

    pub fn build<F: FeatureMap + ?Sized>(phi: &F, h: &History, burn_in: usize) -> Self {
        let mut ct = Self::empty(h.alphabet().clone(), burn_in);
        ct.extend(phi, h).expect("an empty tensor is extended by any history");
        ct
    }

    /// Counts the cycles of `h` beyond those already counted.
    pub fn extend<F: FeatureMap + ?Sized>(&mut self, phi: &F, h: &History) -> Result<(), MdpError> {
        let done = self.observations.len();
        if h.len() < done {
            return Err(MdpError::NotAnExtension {
                history: h.len(),
                tensor: done,
            });
        }
        if h.len() > 1 {
            self.actions = h.actions().to_vec();
        }
        let first = self.burn_in + 1;
        for t in done + 1..=h.len() {
            self.observations.push(h.observation(t));
            self.rewards.push(h.reward(t));
            if t < first {
                continue;
            }
            let label = phi.state_of(&self.observations);
            let id = self.intern(label);
            if self.occurrences[id].is_empty() {
                self.realized += 1;
            }
            self.occurrences[id].push(t);
            self.trace.push(id);
            if t > first {
                let prev = self.trace[self.trace.len() - 2];
                let cell = (prev, self.actions[t - 2], id, self.rewards[t - 1]);
                self.add_cell(cell, 1);
                let (s, a, _, _) = cell;
                self.refresh_sa(s, a);
            }
        }
        Ok(())
    }

    fn intern(&mut self, label: Context) -> usize {
        if let Some(&id) = self.index.get(&label) {
            return id;
        }
        let id = self.labels.len();
        self.index.insert(label.clone(), id);
        self.labels.push(label);
        self.occurrences.push(Vec::new());
        id
    }

    fn add_cell(&mut self, (s, a, s2, r): Cell, d: i64) {
        bump(&mut self.cells, (s, a, s2, r), d);
        bump(&mut self.sas, (s, a, s2), d);
        bump(&mut self.dest, (s2, r), d);
    }

    fn refresh_sa(&mut self, s: usize, a: usize) {
        let mut stat = BlockStat::default();
        for (_, &c) in self.sas.range((s, a, 0)..=(s, a, usize::MAX)) {
            stat.total += c;
            stat.nonzero += 1;
        }
        if stat.total == 0 {
            self.sa.remove(&(s, a));
        } else {
            self.sa.insert((s, a), stat);
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Number of counted cycles `n`.
    pub fn cycles(&self) -> usize {
        self.observations.len()
    }

    /// Number of counted transitions `n_{++}^{++}`.
    pub fn transitions(&self) -> u64 {
        self.trace.len().saturating_sub(1) as u64
    }

    /// Number of realized states `m`.
    pub fn state_count(&self) -> usize {
        self.realized
    }

    pub fn label(&self, id: usize) -> &Context {
        &self.labels[id]
    }

    pub fn id_of(&self, label: &Context) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Ids of realized states in ascending order.
    pub fn realized_ids(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&id| !self.occurrences[id].is_empty())
            .collect()
    }

    /// State id at cycle `t` (1-based), for `t > burn_in`.
    pub fn state_at(&self, t: usize) -> Option<usize> {
        t.checked_sub(self.burn_in + 1).and_then(|i| self.trace.get(i)).copied()
    }

    /// State of the most recent cycle.
    pub fn current_state(&self) -> Option<usize> {
        self.trace.last().copied()
    }

    /// `n_{ss'}^{ar'}`.
    pub fn count(&self, s: usize, a: usize, s2: usize, r: usize) -> u64 {
        self.cells.get(&(s, a, s2, r)).copied().unwrap_or(0)
    }

    /// `n_{ss'}^{a+}`.
    pub fn count_sas(&self, s: usize, a: usize, s2: usize) -> u64 {
        self.sas.get(&(s, a, s2)).copied().unwrap_or(0)
    }

    /// `n_{s+}^{a+}`.
    pub fn count_sa(&self, s: usize, a: usize) -> u64 {
        self.sa.get(&(s, a)).map_or(0, |b| b.total)
    }

    /// `n_{+s'}^{+r'}`.
    pub fn count_dest(&self, s2: usize, r: usize) -> u64 {
        self.dest.get(&(s2, r)).copied().unwrap_or(0)
    }

    /// Non-zero cells `((s, a, s', r'), n)` in key order.
    pub fn cells(&self) -> impl Iterator<Item = (Cell, u64)> + '_ {
        self.cells.iter().map(|(&k, &v)| (k, v))
    }

    /// Non-zero `((s, a, s'), n_{ss'}^{a+})` in key order.
    pub fn transition_counts(&self) -> impl Iterator<Item = ((usize, usize, usize), u64)> + '_ {
        self.sas.iter().map(|(&k, &v)| (k, v))
    }

    /// Recomputes every marginal from the cells and compares.
    pub fn check_marginals(&self) -> bool {
        let mut sas: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
        let mut dest: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        let mut total = 0;
        for (&(s, a, s2, r), &c) in &self.cells {
            *sas.entry((s, a, s2)).or_default() += c;
            *dest.entry((s2, r)).or_default() += c;
            total += c;
        }
        let sa_ok = self.sa.iter().all(|(&(s, a), stat)| {
            let row: Vec<u64> = sas.range((s, a, 0)..=(s, a, usize::MAX)).map(|(_, &c)| c).collect();
            row.iter().sum::<u64>() == stat.total && row.len() == stat.nonzero
        });
        let sa_total: u64 = self.sa.values().map(|b| b.total).sum();
        sas == self.sas && dest == self.dest && sa_ok && total == self.transitions() && sa_total == total
    }

    fn sa_row(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.sas.range((s, a, 0)..=(s, a, usize::MAX)).map(|(&(_, _, s2), &c)| (s2, c))
    }

    fn dest_row(&self, s2: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.dest.range((s2, 0)..=(s2, usize::MAX)).map(|(&(_, r), &c)| (r, c))
    }
}

fn bump<K: Ord>(map: &mut BTreeMap<K, u64>, key: K, d: i64) {
    use std::collections::btree_map::Entry;
    match map.entry(key) {
        Entry::Occupied(mut e) => {
            let v = *e.get() as i64 + d;
            debug_assert!(v >= 0, "negative count");
            if v == 0 {
                e.remove();
            } else {
                *e.get_mut() = v as u64;
            }
        }
        Entry::Vacant(e) => {
            debug_assert!(d >= 0, "negative count");
            if d > 0 {
                e.insert(d as u64);
            }
        }
    }
}

/// Code length of one block in bits.
fn block_bits(counts: &[u64], categories: usize, mode: CodeMode) -> f64 {
    code_length_sparse(counts, categories, mode)
}

/// `CL(s_{1:n} | a_{1:n})`: one block per visited `(s, a)` over the realized states.
pub fn state_code_length(ct: &CountTensor, mode: CodeMode) -> f64 {
    state_blocks(ct, mode).iter().map(|b| b.bits).sum()
}

/// `CL(r_{1:n} | s_{1:n}, a_{1:n})` under the given reward model.
pub fn reward_code_length(ct: &CountTensor, model: RewardModel, mode: CodeMode) -> f64 {
    reward_blocks(ct, model, mode).iter().map(|b| b.bits).sum()
}

/// One coded block of a [`CostReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCost {
    /// `s=.. a=..`, `s=.. a=.. s'=..` or `s'=..`.
    pub key: String,
    pub count: u64,
    pub bits: f64,
}

fn state_blocks(ct: &CountTensor, mode: CodeMode) -> Vec<BlockCost> {
    let m = ct.state_count();
    ct.sa
        .iter()
        .map(|(&(s, a), stat)| {
            let row: Vec<u64> = ct.sa_row(s, a).map(|(_, c)| c).collect();
            BlockCost {
                key: format!("s={} a={}", ct.labels[s], a),
                count: stat.total,
                bits: block_bits(&row, m, mode),
            }
        })
        .collect()
}

fn reward_blocks(ct: &CountTensor, model: RewardModel, mode: CodeMode) -> Vec<BlockCost> {
    let k = ct.alphabet.rewards();
    let mut out = Vec::new();
    match model {
        RewardModel::Full => {
            let mut row: Vec<u64> = Vec::new();
            let mut current: Option<(usize, usize, usize)> = None;
            let mut flush = |key: Option<(usize, usize, usize)>, row: &mut Vec<u64>| {
                if let Some((s, a, s2)) = key {
                    out.push(BlockCost {
                        key: format!("s={} a={} s'={}", ct.labels[s], a, ct.labels[s2]),
                        count: row.iter().sum(),
                        bits: block_bits(row, k, mode),
                    });
                }
                row.clear();
            };
            for (&(s, a, s2, _), &c) in &ct.cells {
                if current != Some((s, a, s2)) {
                    flush(current, &mut row);
                    current = Some((s, a, s2));
                }
                row.push(c);
            }
            flush(current, &mut row);
        }
        RewardModel::StateOnly => {
            let dests: BTreeSet<usize> = ct.dest.keys().map(|&(s2, _)| s2).collect();
            for s2 in dests {
                let row: Vec<u64> = ct.dest_row(s2).map(|(_, c)| c).collect();
                out.push(BlockCost {
                    key: format!("s'={}", ct.labels[s2]),
                    count: row.iter().sum(),
                    bits: block_bits(&row, k, mode),
                });
            }
        }
    }
    out
}

/// `Cost(Φ|h)` broken down into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub config: CostConfig,
    pub cycles: usize,
    pub transitions: u64,
    pub states: usize,
    pub state_bits: f64,
    pub reward_bits: f64,
    pub phi_bits: f64,
    pub total_bits: f64,
    pub state_blocks: Vec<BlockCost>,
    pub reward_blocks: Vec<BlockCost>,
}

impl CostReport {
    /// Key-value text with a fixed field order and 6 decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "code_mode={}", c.mode.name());
        if let CodeMode::Incremental { alpha } = c.mode {
            let _ = writeln!(out, "alpha={alpha}");
        }
        let _ = writeln!(out, "reward_model={}", c.reward_model.name());
        let _ = writeln!(out, "phi_penalty={}", c.phi_penalty);
        let _ = writeln!(out, "burn_in={}", c.burn_in);
        let _ = writeln!(out, "cycles={}", self.cycles);
        let _ = writeln!(out, "transitions={}", self.transitions);
        let _ = writeln!(out, "states={}", self.states);
        let _ = writeln!(out, "state_bits={:.6}", self.state_bits);
        let _ = writeln!(out, "reward_bits={:.6}", self.reward_bits);
        let _ = writeln!(out, "phi_bits={:.6}", self.phi_bits);
        let _ = writeln!(out, "total_bits={:.6}", self.total_bits);
        for b in &self.state_blocks {
            let _ = writeln!(out, "state_block {} n={} bits={:.6}", b.key, b.count, b.bits);
        }
        for b in &self.reward_blocks {
            let _ = writeln!(out, "reward_block {} n={} bits={:.6}", b.key, b.count, b.bits);
        }
        out
    }
}

/// Cost of the counted data plus `phi_bits` (pass 0 when the penalty is off).
pub fn cost_of_counts(ct: &CountTensor, phi_bits: f64, config: &CostConfig) -> CostReport {
    let mut state_blocks = state_blocks(ct, config.mode);
    let mut reward_blocks = reward_blocks(ct, config.reward_model, config.mode);
    let state_bits: f64 = state_blocks.iter().map(|b| b.bits).sum();
    let reward_bits: f64 = reward_blocks.iter().map(|b| b.bits).sum();
    state_blocks.sort_by(|x, y| x.key.cmp(&y.key));
    reward_blocks.sort_by(|x, y| x.key.cmp(&y.key));
    let phi_bits = if config.phi_penalty { phi_bits } else { 0.0 };
    CostReport {
        config: *config,
        cycles: ct.cycles(),
        transitions: ct.transitions(),
        states: ct.state_count(),
        state_bits,
        reward_bits,
        phi_bits,
        total_bits: state_bits + reward_bits + phi_bits,
        state_blocks,
        reward_blocks,
    }
}

/// `Cost(Φ|h)`.
pub fn cost<F: FeatureMap + ?Sized>(phi: &F, h: &History, config: &CostConfig) -> CostReport {
    let ct = CountTensor::build(phi, h, config.burn_in);
    cost_of_counts(&ct, phi.description_length(), config)
}

/// Frequency estimates of the MDP on a dense state index.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpEstimate {
    /// Labels of the real states; the exploration state, if any, follows them.
    pub states: Vec<Context>,
    pub exploration: bool,
    pub actions: usize,
    pub reward_values: Vec<f64>,
    /// `rows[s][a]`: `(s', T̂_{ss'}^a, R̂_{ss'}^a)` for the non-zero entries.
    pub rows: Vec<Vec<Vec<(usize, f64, f64)>>>,
    /// `(s, a, s')` → `R̂_{ss'}^{ar'}` over the reward alphabet.
    pub reward_distributions: BTreeMap<(usize, usize, usize), Vec<f64>>,
}

impl MdpEstimate {
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    /// Index of the absorbing exploration state.
    pub fn exploration_state(&self) -> Option<usize> {
        self.exploration.then_some(self.states.len())
    }

    pub fn index_of(&self, label: &Context) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// `T̂_{ss'}^a`.
    pub fn transition(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.rows[s][a]
            .iter()
            .find(|e| e.0 == s2)
            .map_or(0.0, |e| e.1)
    }

    /// `R̂_{ss'}^a`.
    pub fn expected_reward(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.rows[s][a]
            .iter()
            .find(|e| e.0 == s2)
            .map_or(0.0, |e| e.2)
    }

    /// Builds an estimate from explicit dense arrays; used for fixtures.
    pub fn from_dense(transition: &[Vec<Vec<f64>>], reward: &[Vec<Vec<f64>>]) -> Self {
        let m = transition.len();
        let actions = transition.first().map_or(0, Vec::len);
        let rows = (0..m)
            .map(|s| {
                (0..actions)
                    .map(|a| {
                        (0..m)
                            .filter(|&s2| transition[s][a][s2] != 0.0)
                            .map(|s2| (s2, transition[s][a][s2], reward[s][a][s2]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            states: (0..m).map(|i| Context::new(vec![i])).collect(),
            exploration: false,
            actions,
            reward_values: Vec::new(),
            rows,
            reward_distributions: BTreeMap::new(),
        }
    }
}

/// `T̂` and `R̂` by relative frequencies; unvisited `(s, a)` rows are all zero.
pub fn estimate_mdp(ct: &CountTensor) -> MdpEstimate {
    estimate_with_bonus(ct, None)
}

/// Frequency estimates, optionally over counts augmented with an absorbing
/// state that every `(s, a)` reaches by one virtual transition paying `bonus`.
pub fn estimate_with_bonus(ct: &CountTensor, bonus: Option<f64>) -> MdpEstimate {
    let ids = ct.realized_ids();
    let dense: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let m = ids.len();
    let actions = ct.alphabet.actions();
    let values = ct.alphabet.reward_values().to_vec();
    let extra = bonus.is_some() as usize;
    let mut rows = vec![vec![Vec::new(); actions]; m + extra];
    let mut reward_distributions = BTreeMap::new();
    for (&(s, a, s2), &n) in &ct.sas {
        let total = ct.count_sa(s, a) + extra as u64;
        let mut dist = vec![0.0; values.len()];
        let mut expected = 0.0;
        for r in 0..values.len() {
            let c = ct.count(s, a, s2, r);
            if c > 0 {
                dist[r] = c as f64 / n as f64;
                expected += dist[r] * values[r];
            }
        }
        let (i, j) = (dense[&s], dense[&s2]);
        rows[i][a].push((j, n as f64 / total as f64, expected));
        reward_distributions.insert((i, a, j), dist);
    }
    if let Some(bonus) = bonus {
        for (i, &id) in ids.iter().enumerate() {
            for (a, row) in rows[i].iter_mut().enumerate() {
                let total = ct.count_sa(id, a) + 1;
                row.push((m, 1.0 / total as f64, bonus));
            }
        }
        for row in rows[m].iter_mut() {
            row.push((m, 1.0, bonus));
        }
    }
    MdpEstimate {
        states: ids.iter().map(|&id| ct.labels[id].clone()).collect(),
        exploration: bonus.is_some(),
        actions,
        reward_values: values,
        rows,
        reward_distributions,
    }
}

/// Sparse matrices `Û^{ar'}_{ss'} = T̂_{ss'}^a R̂_{ss'}^{ar'}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UMatrices {
    states: usize,
    actions: usize,
    rewards: usize,
    /// `rows[(a * rewards + r) * states + s]`: `(s', value)` pairs.
    rows: Vec<Vec<(usize, f64)>>,
    /// Number of free parameters `M`.
    pub parameters: u64,
}

impl UMatrices {
    pub fn zeros(states: usize, actions: usize, rewards: usize) -> Self {
        Self {
            states,
            actions,
            rewards,
            rows: vec![Vec::new(); states * actions * rewards],
            parameters: 0,
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn rewards(&self) -> usize {
        self.rewards
    }

    fn slot(&self, a: usize, r: usize, s: usize) -> usize {
        (a * self.rewards + r) * self.states + s
    }

    pub fn row(&self, a: usize, r: usize, s: usize) -> &[(usize, f64)] {
        &self.rows[self.slot(a, r, s)]
    }

    pub fn get(&self, a: usize, r: usize, s: usize, s2: usize) -> f64 {
        self.row(a, r, s).iter().find(|e| e.0 == s2).map_or(0.0, |e| e.1)
    }

    /// Sets one entry; zero values are not stored.
    pub fn set(&mut self, a: usize, r: usize, s: usize, s2: usize, value: f64) {
        let slot = self.slot(a, r, s);
        let row = &mut self.rows[slot];
        row.retain(|e| e.0 != s2);
        if value != 0.0 {
            row.push((s2, value));
            row.sort_by_key(|e| e.0);
        }
    }

    /// `log2 Σ_{paths} Π_t Û^{a_t r_t}_{s_{t-1} s_t}` starting from `start`;
    /// `steps[i] = (a, r')` of the i-th transition. `-inf` if the data has
    /// probability zero.
    pub fn log2_marginal(&self, start: usize, steps: &[(usize, usize)]) -> f64 {
        let mut v = vec![0.0; self.states];
        let mut next = vec![0.0; self.states];
        v[start] = 1.0;
        let mut log2p = 0.0;
        for &(a, r) in steps {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &mass) in v.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for &(s2, u) in self.row(a, r, s) {
                    next[s2] += mass * u;
                }
            }
            let c: f64 = next.iter().sum();
            if !(c > 0.0) {
                return f64::NEG_INFINITY;
            }
            log2p += c.log2();
            for (x, y) in v.iter_mut().zip(&next) {
                *x = y / c;
            }
        }
        log2p
    }
}

/// Builds `Û` from counts on the dense index of realized states.
pub fn u_matrices(ct: &CountTensor, config: &CostConfig) -> UMatrices {
    let ids = ct.realized_ids();
    let dense: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let m = ids.len();
    let k = ct.alphabet.rewards();
    let mut u = UMatrices::zeros(m, ct.alphabet.actions(), k);
    let mut free: u64 = 0;
    match config.reward_model {
        RewardModel::Full => {
            for (&(s, a, s2, r), &c) in &ct.cells {
                let n = ct.count_sa(s, a) as f64;
                let slot = u.slot(a, r, dense[&s]);
                u.rows[slot].push((dense[&s2], c as f64 / n));
            }
            for &(s, a) in ct.sa.keys() {
                let entries = ct.cells.range((s, a, 0, 0)..=(s, a, usize::MAX, usize::MAX)).count() as u64;
                free += entries - 1;
            }
        }
        RewardModel::StateOnly => {
            let dest_totals: BTreeMap<usize, u64> = ct.dest.iter().fold(BTreeMap::new(), |mut acc, (&(s2, _), &c)| {
                *acc.entry(s2).or_insert(0) += c;
                acc
            });
            for (&(s, a, s2), &c) in &ct.sas {
                let t = c as f64 / ct.count_sa(s, a) as f64;
                let d = dest_totals[&s2] as f64;
                for (r, cr) in ct.dest_row(s2) {
                    let slot = u.slot(a, r, dense[&s]);
                    u.rows[slot].push((dense[&s2], t * cr as f64 / d));
                }
            }
            for stat in ct.sa.values() {
                free += stat.nonzero as u64 - 1;
            }
            for &s2 in dest_totals.keys() {
                free += ct.dest_row(s2).count() as u64 - 1;
            }
        }
    }
    for row in u.rows.iter_mut() {
        row.sort_by_key(|e| e.0);
    }
    u.parameters = match config.parameter_count {
        ParameterCount::Sparse => free,
        ParameterCount::Literal => {
            let m = m as u64;
            m * m.saturating_sub(1) * ct.alphabet.actions() as u64 * (k as u64).saturating_sub(1)
        }
    };
    u
}

/// `ICost(Φ|h)` broken down into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcostReport {
    /// `-log2 P_Û(r | a)`; `+inf` when the rewards have probability zero.
    pub reward_bits: f64,
    pub parameters: u64,
    pub parameter_bits: f64,
    pub phi_bits: f64,
    pub total_bits: f64,
}

/// `ICost` of counted data; `phi_bits` is charged only if the penalty is on.
pub fn icost_of_counts(ct: &CountTensor, phi_bits: f64, config: &CostConfig) -> IcostReport {
    let phi_bits = if config.phi_penalty { phi_bits } else { 0.0 };
    let n = ct.transitions();
    if n == 0 {
        return IcostReport {
            reward_bits: 0.0,
            parameters: 0,
            parameter_bits: 0.0,
            phi_bits,
            total_bits: phi_bits,
        };
    }
    let u = u_matrices(ct, config);
    let ids = ct.realized_ids();
    let start = ids.binary_search(&ct.trace[0]).expect("traced states are realized");
    let first = ct.burn_in + 2;
    let steps: Vec<(usize, usize)> = (first..=ct.cycles())
        .map(|t| (ct.actions[t - 2], ct.rewards[t - 1]))
        .collect();
    let reward_bits = -u.log2_marginal(start, &steps);
    let parameter_bits = 0.5 * u.parameters as f64 * (n as f64).log2();
    IcostReport {
        reward_bits,
        parameters: u.parameters,
        parameter_bits,
        phi_bits,
        total_bits: reward_bits + parameter_bits + phi_bits,
    }
}

/// `ICost(Φ|h)`.
pub fn icost<F: FeatureMap + ?Sized>(phi: &F, h: &History, config: &CostConfig) -> IcostReport {
    let ct = CountTensor::build(phi, h, config.burn_in);
    icost_of_counts(&ct, phi.description_length(), config)
}

/// Change of each cost term caused by a move.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostDelta {
    pub state_bits: f64,
    pub reward_bits: f64,
    pub phi_bits: f64,
}

impl CostDelta {
    pub fn total(&self) -> f64 {
        self.state_bits + self.reward_bits + self.phi_bits
    }
}

/// A move of the context tree, resolved against counted data.
#[derive(Debug, Clone)]
pub struct MovePlan {
    pub set: SuffixSet,
    pub delta: CostDelta,
    new_labels: Vec<Context>,
    /// `(cycle, old id, new id)`, sorted by cycle.
    changes: Vec<(usize, usize, usize)>,
    cell_diffs: BTreeMap<Cell, i64>,
    realized: usize,
}

fn merge_row(base: impl Iterator<Item = (usize, u64)>, diffs: impl Iterator<Item = (usize, i64)>) -> Vec<u64> {
    let mut row: BTreeMap<usize, i64> = base.map(|(k, c)| (k, c as i64)).collect();
    for (k, d) in diffs {
        *row.entry(k).or_insert(0) += d;
    }
    row.into_values()
        .filter(|&c| {
            debug_assert!(c >= 0);
            c > 0
        })
        .map(|c| c as u64)
        .collect()
}

/// Resolves `mv` on `set` against the counts: the relabeled cycles, the
/// changed cells and the exact cost change. Only blocks that involve the
/// affected states are re-coded; the other state blocks are only re-priced
/// for the changed number of states.
pub fn plan_move(ct: &CountTensor, set: &SuffixSet, mv: &Move, config: &CostConfig) -> Result<MovePlan, MdpError> {
    let next = set.apply(mv)?;
    let k = set.alphabet();
    let base = ct.labels.len();
    let mut new_labels: Vec<Context> = Vec::new();
    let mut id_for = |label: Context| -> usize {
        if let Some(id) = ct.id_of(&label) {
            return id;
        }
        if let Some(i) = new_labels.iter().position(|l| *l == label) {
            return base + i;
        }
        new_labels.push(label);
        base + new_labels.len() - 1
    };
    // a split relabels cycles in state `s` by the next older observation;
    // a merge sends every child to the parent
    let mut changes = Vec::new();
    match mv {
        Move::Split(s) => {
            if let Some(id) = ct.id_of(s) {
                let children: Vec<usize> = (0..k).map(|o| id_for(s.extend_older(o))).collect();
                for &t in &ct.occurrences[id] {
                    // a history of exactly |s| symbols keeps the provisional label
                    if t > s.len() {
                        changes.push((t, id, children[ct.observations[t - 1 - s.len()]]));
                    }
                }
            }
        }
        Move::Merge(p) => {
            let parent = id_for(p.clone());
            for o in 0..k {
                if let Some(id) = ct.id_of(&p.extend_older(o)) {
                    changes.extend(ct.occurrences[id].iter().map(|&t| (t, id, parent)));
                }
            }
            changes.sort_unstable();
        }
    }

    // occupancy changes decide the new number of realized states
    let mut occ: FxHashMap<usize, i64> = FxHashMap::default();
    for &(_, old, new) in &changes {
        *occ.entry(old).or_insert(0) -= 1;
        *occ.entry(new).or_insert(0) += 1;
    }
    let mut realized = ct.realized as i64;
    for (&id, &d) in &occ {
        let before = ct.occurrences.get(id).map_or(0, Vec::len) as i64;
        let after = before + d;
        if before > 0 && after == 0 {
            realized -= 1;
        } else if before == 0 && after > 0 {
            realized += 1;
        }
    }
    let realized = realized as usize;

    let first = ct.burn_in + 1;
    let n = ct.cycles();
    let mut diffs: FxHashMap<Cell, i64> = FxHashMap::default();
    let mut record = |t: usize, from: usize, to: usize| {
        let (a, r) = (ct.actions[t - 2], ct.rewards[t - 1]);
        let old = (ct.trace[t - 1 - first], a, ct.trace[t - first], r);
        let new = (from, a, to, r);
        if old != new {
            *diffs.entry(old).or_insert(0) -= 1;
            *diffs.entry(new).or_insert(0) += 1;
        }
    };
    for (i, &(t, _, new)) in changes.iter().enumerate() {
        // the transition into t, and the one out of t unless t + 1 also moved
        if t > first {
            let from = match i.checked_sub(1).map(|j| changes[j]) {
                Some((u, _, prev)) if u + 1 == t => prev,
                _ => ct.trace[t - 1 - first],
            };
            record(t, from, new);
        }
        let next_moved = changes.get(i + 1).is_some_and(|c| c.0 == t + 1);
        if t < n && !next_moved {
            record(t + 1, new, ct.trace[t + 1 - first]);
        }
    }
    let cell_diffs: BTreeMap<Cell, i64> = diffs.into_iter().filter(|&(_, d)| d != 0).collect();

    let mut sas_diffs: BTreeMap<(usize, usize, usize), i64> = BTreeMap::new();
    let mut dest_diffs: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for (&(s, a, s2, r), &d) in &cell_diffs {
        *sas_diffs.entry((s, a, s2)).or_insert(0) += d;
        *dest_diffs.entry((s2, r)).or_insert(0) += d;
    }

    let mode = config.mode;
    let (m_old, m_new) = (ct.realized, realized);
    let mut delta = CostDelta::default();

    let touched: BTreeSet<(usize, usize)> = sas_diffs.keys().map(|&(s, a, _)| (s, a)).collect();
    for &(s, a) in &touched {
        let old: Vec<u64> = ct.sa_row(s, a).map(|(_, c)| c).collect();
        let new = merge_row(
            ct.sa_row(s, a),
            sas_diffs
                .range((s, a, 0)..=(s, a, usize::MAX))
                .map(|(&(_, _, s2), &d)| (s2, d)),
        );
        delta.state_bits += block_bits(&new, m_new, mode) - block_bits(&old, m_old, mode);
    }
    if m_new != m_old {
        for (key, stat) in &ct.sa {
            if !touched.contains(key) {
                delta.state_bits += model_bits(stat.total, m_new, stat.nonzero, mode)
                    - model_bits(stat.total, m_old, stat.nonzero, mode);
            }
        }
    }

    let kr = ct.alphabet.rewards();
    match config.reward_model {
        RewardModel::Full => {
            for &(s, a, s2) in sas_diffs.keys() {
                let range = (s, a, s2, 0)..=(s, a, s2, usize::MAX);
                let old_row = || ct.cells.range(range.clone()).map(|(&(_, _, _, r), &c)| (r, c));
                let old: Vec<u64> = old_row().map(|(_, c)| c).collect();
                let new = merge_row(
                    old_row(),
                    cell_diffs.range(range.clone()).map(|(&(_, _, _, r), &d)| (r, d)),
                );
                delta.reward_bits += block_bits(&new, kr, mode) - block_bits(&old, kr, mode);
            }
        }
        RewardModel::StateOnly => {
            let dests: BTreeSet<usize> = dest_diffs.keys().map(|&(s2, _)| s2).collect();
            for s2 in dests {
                let old: Vec<u64> = ct.dest_row(s2).map(|(_, c)| c).collect();
                let new = merge_row(
                    ct.dest_row(s2),
                    dest_diffs
                        .range((s2, 0)..=(s2, usize::MAX))
                        .map(|(&(_, r), &d)| (r, d)),
                );
                delta.reward_bits += block_bits(&new, kr, mode) - block_bits(&old, kr, mode);
            }
        }
    }

    if config.phi_penalty {
        delta.phi_bits = next.description_length() - set.description_length();
    }

    Ok(MovePlan {
        set: next,
        delta,
        new_labels,
        changes,
        cell_diffs,
        realized,
    })
}

impl CountTensor {
    /// Relabels the counted cycles as described by `plan`.
    pub fn apply(&mut self, plan: &MovePlan) {
        for label in &plan.new_labels {
            self.intern(label.clone());
        }
        let first = self.burn_in + 1;
        let mut moved: FxHashSet<usize> = FxHashSet::default();
        let mut losers: BTreeSet<usize> = BTreeSet::new();
        for &(t, old, new) in &plan.changes {
            self.trace[t - first] = new;
            self.occurrences[new].push(t);
            moved.insert(t);
            losers.insert(old);
        }
        for id in losers {
            self.occurrences[id].retain(|t| !moved.contains(t));
        }
        let gainers: BTreeSet<usize> = plan.changes.iter().map(|c| c.2).collect();
        for id in gainers {
            self.occurrences[id].sort_unstable();
        }
        self.realized = plan.realized;
        let mut touched: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (&cell, &d) in &plan.cell_diffs {
            self.add_cell(cell, d);
            touched.insert((cell.0, cell.1));
        }
        for (s, a) in touched {
            self.refresh_sa(s, a);
        }
    }
}

/// A context tree together with its counts on a growing history, supporting
/// exact incremental cost changes for split and merge moves.
#[derive(Debug, Clone)]
pub struct CostTracker {
    set: SuffixSet,
    tensor: CountTensor,
    config: CostConfig,
    total: f64,
}

impl CostTracker {
    pub fn new(set: SuffixSet, h: &History, config: CostConfig) -> Self {
        let tensor = CountTensor::build(&set, h, config.burn_in);
        let total = cost_of_counts(&tensor, set.description_length(), &config).total_bits;
        Self {
            set,
            tensor,
            config,
            total,
        }
    }

    pub fn set(&self) -> &SuffixSet {
        &self.set
    }

    pub fn tensor(&self) -> &CountTensor {
        &self.tensor
    }

    pub fn config(&self) -> &CostConfig {
        &self.config
    }

    /// Current `Cost(Φ|h)`.
    pub fn cost(&self) -> f64 {
        self.total
    }

    pub fn report(&self) -> CostReport {
        cost_of_counts(&self.tensor, self.set.description_length(), &self.config)
    }

    pub fn icost(&self) -> IcostReport {
        icost_of_counts(&self.tensor, self.set.description_length(), &self.config)
    }

    pub fn plan(&self, mv: &Move) -> Result<MovePlan, MdpError> {
        plan_move(&self.tensor, &self.set, mv, &self.config)
    }

    /// `Cost(Φ'|h) - Cost(Φ|h)` for the neighbour reached by `mv`.
    pub fn delta(&self, mv: &Move) -> Result<f64, MdpError> {
        Ok(self.plan(mv)?.delta.total())
    }

    pub fn apply(&mut self, plan: MovePlan) {
        self.tensor.apply(&plan);
        self.set = plan.set;
        self.total = cost_of_counts(&self.tensor, self.set.description_length(), &self.config).total_bits;
    }

    /// Counts the cycles of `h` beyond those already counted.
    pub fn extend(&mut self, h: &History) -> Result<(), MdpError> {
        self.tensor.extend(&self.set, h)?;
        self.total = cost_of_counts(&self.tensor, self.set.description_length(), &self.config).total_bits;
        Ok(())
    }
}

/// `Cost(Φ_split|h) - Cost(Φ|h)` for splitting `s`.
pub fn cost_delta_split(ct: &CountTensor, set: &SuffixSet, s: &Context, config: &CostConfig) -> Result<f64, MdpError> {
    Ok(plan_move(ct, set, &Move::Split(s.clone()), config)?.delta.total())
}

/// `Cost(Φ_merge|h) - Cost(Φ|h)` for merging the children of `parent`.
pub fn cost_delta_merge(ct: &CountTensor, set: &SuffixSet, parent: &Context, config: &CostConfig) -> Result<f64, MdpError> {
    Ok(plan_move(ct, set, &Move::Merge(parent.clone()), config)?.delta.total())
}
