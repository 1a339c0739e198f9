//! Simulated environments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::histories::{Action, Alphabet, Environment, HistoryError, Observation, Percept};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment `{0}` (expected `tiny` or `chain:L`)")]
    Unknown(String),
    #[error("chain length must be at least 2, got `{0}`")]
    BadChainLength(String),
}

/// Fair coin observations with reward `2·o_{t-1} + o_t`; a single action.
#[derive(Debug, Clone)]
pub struct TinyExampleEnv {
    alphabet: Alphabet,
    source: Source,
    prev: Observation,
}

#[derive(Debug, Clone)]
enum Source {
    Random { seed: u64, rng: ChaCha8Rng },
    Scripted { stream: Vec<Observation>, pos: usize },
}

impl TinyExampleEnv {
    pub fn new(seed: u64) -> Self {
        Self {
            alphabet: Self::alphabet_spec(),
            source: Source::Random {
                seed,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            prev: 0,
        }
    }

    /// Replays a fixed observation stream instead of coin flips.
    pub fn scripted(stream: Vec<Observation>) -> Self {
        Self {
            alphabet: Self::alphabet_spec(),
            source: Source::Scripted { stream, pos: 0 },
            prev: 0,
        }
    }

    pub fn alphabet_spec() -> Alphabet {
        Alphabet::new(2, 1, vec![0.0, 1.0, 2.0, 3.0]).expect("valid alphabet")
    }

    fn emit(&mut self) -> Result<Percept, HistoryError> {
        let o = match &mut self.source {
            Source::Random { rng, .. } => rng.gen_range(0..2),
            Source::Scripted { stream, pos } => {
                let o = *stream.get(*pos).ok_or(HistoryError::Exhausted)?;
                *pos += 1;
                o
            }
        };
        let r = 2 * self.prev + o;
        self.prev = o;
        Ok(Percept {
            observation: o,
            reward: r,
        })
    }
}

impl Environment for TinyExampleEnv {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn reset(&mut self) -> Percept {
        self.prev = 0;
        match &mut self.source {
            Source::Random { seed, rng } => *rng = ChaCha8Rng::seed_from_u64(*seed),
            Source::Scripted { pos, .. } => *pos = 0,
        }
        self.emit().expect("scripted streams are non-empty")
    }

    fn step(&mut self, action: Action) -> Result<Percept, HistoryError> {
        self.alphabet.check_action(action)?;
        self.emit()
    }
}

pub const LEFT: Action = 0;
pub const RIGHT: Action = 1;

/// `L` cells in a line; the observation is the cell, reward 1 at the right end.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    alphabet: Alphabet,
    length: usize,
    position: usize,
}

impl ChainEnv {
    pub fn new(length: usize) -> Self {
        assert!(length >= 2, "chain needs at least two cells");
        Self {
            alphabet: Alphabet::new(length, 2, vec![0.0, 1.0]).expect("valid alphabet"),
            length,
            position: 0,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn position(&self) -> usize {
        self.position
    }

    fn percept(&self) -> Percept {
        Percept {
            observation: self.position,
            reward: (self.position == self.length - 1) as usize,
        }
    }
}

impl Environment for ChainEnv {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn reset(&mut self) -> Percept {
        self.position = 0;
        self.percept()
    }

    fn step(&mut self, action: Action) -> Result<Percept, HistoryError> {
        self.alphabet.check_action(action)?;
        self.position = match action {
            LEFT => self.position.saturating_sub(1),
            _ => (self.position + 1).min(self.length - 1),
        };
        Ok(self.percept())
    }
}

/// Builds an environment from its registry name: `tiny` or `chain:L`.
pub fn from_name(name: &str, seed: u64) -> Result<Box<dyn Environment + Send>, EnvError> {
    if name == "tiny" {
        return Ok(Box::new(TinyExampleEnv::new(seed)));
    }
    if let Some(len) = name.strip_prefix("chain:") {
        let length: usize = len.parse().map_err(|_| EnvError::BadChainLength(len.to_string()))?;
        if length < 2 {
            return Err(EnvError::BadChainLength(len.to_string()));
        }
        return Ok(Box::new(ChainEnv::new(length)));
    }
    Err(EnvError::Unknown(name.to_string()))
}
