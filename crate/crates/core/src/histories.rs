//! Observation-reward-action histories and the environment contract.
//!
//! A history has the shape `o r (a o r)*`: it starts with an observation and a
//! reward, and every later cycle is introduced by the action that caused it.
//! Symbols are small integers indexing finite alphabets declared up front.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

pub type Observation = usize;
pub type Action = usize;
/// Index into the declared reward set; the numeric payoff lives in [`Alphabet`].
pub type Reward = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error("observation {0} outside the declared alphabet of size {1}")]
    ObservationOutOfRange(Observation, usize),

    #[error("action {0} outside the declared alphabet of size {1}")]
    ActionOutOfRange(Action, usize),

    #[error("reward symbol {0} outside the declared reward set of size {1}")]
    RewardOutOfRange(Reward, usize),

    #[error("history already started; use append_cycle")]
    AlreadyStarted,

    #[error("history is empty; call begin first")]
    NotStarted,

    #[error("alphabet must have at least one observation, action and reward")]
    EmptyAlphabet,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("environment has no more percepts")]
    Exhausted,
}

impl HistoryError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        HistoryError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Declared symbol sets. Rewards carry a numeric payoff per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    observations: usize,
    actions: usize,
    rewards: Vec<f64>,
}

impl Alphabet {
    pub fn new(observations: usize, actions: usize, rewards: Vec<f64>) -> Result<Self, HistoryError> {
        if observations == 0 || actions == 0 || rewards.is_empty() {
            return Err(HistoryError::EmptyAlphabet);
        }
        Ok(Self {
            observations,
            actions,
            rewards,
        })
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn rewards(&self) -> usize {
        self.rewards.len()
    }

    pub fn reward_value(&self, r: Reward) -> f64 {
        self.rewards[r]
    }

    pub fn reward_values(&self) -> &[f64] {
        &self.rewards
    }

    pub fn max_reward_value(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_observation(&self, o: Observation) -> Result<(), HistoryError> {
        if o < self.observations {
            Ok(())
        } else {
            Err(HistoryError::ObservationOutOfRange(o, self.observations))
        }
    }

    pub fn check_action(&self, a: Action) -> Result<(), HistoryError> {
        if a < self.actions {
            Ok(())
        } else {
            Err(HistoryError::ActionOutOfRange(a, self.actions))
        }
    }

    pub fn check_reward(&self, r: Reward) -> Result<(), HistoryError> {
        if r < self.rewards.len() {
            Ok(())
        } else {
            Err(HistoryError::RewardOutOfRange(r, self.rewards.len()))
        }
    }
}

/// One cycle of a history. `action` is `None` only on the final cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    pub observation: Observation,
    pub reward: Reward,
    pub action: Option<Action>,
}

/// Observation and reward emitted by an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percept {
    pub observation: Observation,
    pub reward: Reward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    alphabet: Alphabet,
    observations: Vec<Observation>,
    rewards: Vec<Reward>,
    /// `actions[t]` was taken after cycle `t + 1` (1-based), so `len() == n - 1`.
    actions: Vec<Action>,
}

impl History {
    pub fn new(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            observations: Vec::new(),
            rewards: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Number of observation-reward pairs `n`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Records the initial observation and reward.
    pub fn begin(&mut self, o: Observation, r: Reward) -> Result<(), HistoryError> {
        if !self.is_empty() {
            return Err(HistoryError::AlreadyStarted);
        }
        self.alphabet.check_observation(o)?;
        self.alphabet.check_reward(r)?;
        self.observations.push(o);
        self.rewards.push(r);
        Ok(())
    }

    /// Appends the action taken at the last cycle and the percept it produced.
    pub fn append_cycle(&mut self, a: Action, o: Observation, r: Reward) -> Result<(), HistoryError> {
        if self.is_empty() {
            return Err(HistoryError::NotStarted);
        }
        self.alphabet.check_action(a)?;
        self.alphabet.check_observation(o)?;
        self.alphabet.check_reward(r)?;
        self.actions.push(a);
        self.observations.push(o);
        self.rewards.push(r);
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn rewards(&self) -> &[Reward] {
        &self.rewards
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Observation at 1-based cycle `t`.
    pub fn observation(&self, t: usize) -> Observation {
        self.observations[t - 1]
    }

    /// Reward at 1-based cycle `t`.
    pub fn reward(&self, t: usize) -> Reward {
        self.rewards[t - 1]
    }

    /// Action taken after 1-based cycle `t` (`t < n`).
    pub fn action(&self, t: usize) -> Action {
        self.actions[t - 1]
    }

    pub fn step(&self, t: usize) -> StepRecord {
        StepRecord {
            observation: self.observation(t),
            reward: self.reward(t),
            action: self.actions.get(t - 1).copied(),
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = StepRecord> + '_ {
        (1..=self.len()).map(move |t| self.step(t))
    }

    /// The last `min(k, n)` observations in chronological order.
    pub fn observation_suffix(&self, k: usize) -> &[Observation] {
        let n = self.observations.len();
        &self.observations[n - k.min(n)..]
    }

    /// Writes the history as delimited text, one line per cycle.
    ///
    /// ```text
    /// # phimdp history
    /// # observations=2 actions=1 rewards=0,1,2,3
    /// t,o,r,a
    /// 1,0,1,0
    /// 2,1,3,-
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# phimdp history")?;
        let rewards: Vec<String> = self.alphabet.rewards.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "# observations={} actions={} rewards={}",
            self.alphabet.observations,
            self.alphabet.actions,
            rewards.join(",")
        )?;
        writeln!(w, "t,o,r,a")?;
        for (i, step) in self.steps().enumerate() {
            match step.action {
                Some(a) => writeln!(w, "{},{},{},{}", i + 1, step.observation, step.reward, a)?,
                None => writeln!(w, "{},{},{},-", i + 1, step.observation, step.reward)?,
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("history text is ASCII")
    }

    /// Parses the format produced by [`History::write_to`].
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, HistoryError> {
        let mut alphabet: Option<Alphabet> = None;
        let mut history: Option<History> = None;
        let mut pending_action: Option<Option<Action>> = None;
        let mut seen_header = false;
        let mut last_line = 0;

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            let line = line.map_err(|e| HistoryError::parse(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim_start().starts_with("observations=") {
                    alphabet = Some(parse_alphabet(comment.trim(), lineno)?);
                }
                continue;
            }
            if !seen_header {
                if line.replace(' ', "") != "t,o,r,a" {
                    return Err(HistoryError::parse(lineno, "expected header `t,o,r,a`"));
                }
                seen_header = true;
                continue;
            }
            let alphabet = alphabet
                .clone()
                .ok_or_else(|| HistoryError::parse(lineno, "missing `# observations=...` line"))?;
            let h = history.get_or_insert_with(|| History::new(alphabet));

            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(HistoryError::parse(lineno, format!("expected 4 fields, found {}", fields.len())));
            }
            let num = |s: &str, what: &str| -> Result<usize, HistoryError> {
                s.parse::<usize>()
                    .map_err(|_| HistoryError::parse(lineno, format!("invalid {what} `{s}`")))
            };
            let t = num(fields[0], "cycle index")?;
            if t != h.len() + 1 {
                return Err(HistoryError::parse(lineno, format!("expected cycle {}, found {t}", h.len() + 1)));
            }
            let o = num(fields[1], "observation")?;
            let r = num(fields[2], "reward")?;
            let a = match fields[3] {
                "-" => None,
                s => Some(num(s, "action")?),
            };
            let wrap = |e: HistoryError| HistoryError::parse(lineno, e.to_string());
            match pending_action {
                None => h.begin(o, r).map_err(wrap)?,
                Some(None) => {
                    return Err(HistoryError::parse(lineno, "cycle follows a cycle without action"));
                }
                Some(Some(prev)) => h.append_cycle(prev, o, r).map_err(wrap)?,
            }
            if let Some(a) = a {
                h.alphabet.check_action(a).map_err(wrap)?;
            }
            pending_action = Some(a);
        }

        if let Some(Some(_)) = pending_action {
            return Err(HistoryError::parse(last_line, "final cycle must not carry an action (`-`)"));
        }
        match (history, alphabet) {
            (Some(h), _) => Ok(h),
            (None, Some(alphabet)) => Ok(History::new(alphabet)),
            (None, None) => Err(HistoryError::parse(0, "missing `# observations=...` line")),
        }
    }

    pub fn from_text(text: &str) -> Result<Self, HistoryError> {
        Self::read_from(text.as_bytes())
    }
}

fn parse_alphabet(spec: &str, line: usize) -> Result<Alphabet, HistoryError> {
    let mut observations = None;
    let mut actions = None;
    let mut rewards = None;
    for part in spec.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| HistoryError::parse(line, format!("malformed alphabet field `{part}`")))?;
        match key {
            "observations" => observations = value.parse::<usize>().ok(),
            "actions" => actions = value.parse::<usize>().ok(),
            "rewards" => {
                let parsed: Result<Vec<f64>, _> = value.split(',').map(str::parse::<f64>).collect();
                rewards = parsed.ok();
            }
            _ => return Err(HistoryError::parse(line, format!("unknown alphabet field `{key}`"))),
        }
    }
    match (observations, actions, rewards) {
        (Some(o), Some(a), Some(r)) => Alphabet::new(o, a, r).map_err(|e| HistoryError::parse(line, e.to_string())),
        _ => Err(HistoryError::parse(line, "alphabet needs observations, actions and rewards")),
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// An environment produces percepts from the declared alphabet.
pub trait Environment {
    fn alphabet(&self) -> &Alphabet;

    /// Starts a new episode and returns the first percept.
    fn reset(&mut self) -> Percept;

    fn step(&mut self, action: Action) -> Result<Percept, HistoryError>;
}
