//! Code lengths for i.i.d. categorical sequences.
//!
//! All quantities are in bits (base-2 logarithms) and are real valued; they are
//! used to compare models, never to drive an actual encoder. Every code length
//! splits into a *data* part that depends only on the non-empty counts and a
//! *model* part that depends on the totals `n`, the category dimension `m` and
//! the number of non-empty categories `m'`. The split lets callers re-price a
//! block when only `m` changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total mass of a probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("count vector must have at least one category")]
    EmptyCountVector,

    #[error("probability vector must not be empty")]
    EmptyDistribution,

    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("incremental code regularizer must be positive, got {0}")]
    InvalidAlpha(f64),
}

/// Which i.i.d. code to charge for a count vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum CodeMode {
    /// `n H(n/n) + (m-1)/2 log n`.
    #[default]
    Exact,
    /// `n H(n/n) + (m'-1)/2 log n + m`: parameters only for non-empty categories.
    Sparse,
    /// `log(n! / prod n_i!) + (m-1) log n`.
    Combinatorial,
    /// Sequential Dirichlet(alpha) estimate; alpha = 1/2 is the KT estimator.
    Incremental { alpha: f64 },
}

impl CodeMode {
    pub const KT_ALPHA: f64 = 0.5;

    pub fn kt() -> Self {
        CodeMode::Incremental { alpha: Self::KT_ALPHA }
    }

    pub fn validate(&self) -> Result<(), CodingError> {
        match *self {
            CodeMode::Incremental { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(CodingError::InvalidAlpha(alpha))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CodeMode::Exact => "exact",
            CodeMode::Sparse => "sparse",
            CodeMode::Combinatorial => "combinatorial",
            CodeMode::Incremental { .. } => "incremental",
        }
    }
}

/// Non-negative counts over `m >= 1` categories.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountVector {
    counts: Vec<u64>,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self, CodingError> {
        if counts.is_empty() {
            return Err(CodingError::EmptyCountVector);
        }
        Ok(Self { counts })
    }

    /// Counts of each symbol in `symbols`, over `categories` categories.
    ///
    /// Symbols outside `0..categories` are ignored.
    pub fn from_symbols(symbols: &[usize], categories: usize) -> Result<Self, CodingError> {
        let mut counts = vec![0u64; categories];
        for &x in symbols {
            if let Some(c) = counts.get_mut(x) {
                *c += 1;
            }
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of categories `m`.
    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    /// Number of non-empty categories `m'`.
    pub fn nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64, CodingError> {
    if p.is_empty() {
        return Err(CodingError::EmptyDistribution);
    }
    let mut sum = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(CodingError::InvalidProbability { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(CodingError::NotNormalized { sum });
    }
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum();
    Ok(h.max(0.0))
}

/// Code length of a count vector under `mode`.
pub fn code_length(nv: &CountVector, mode: CodeMode) -> Result<f64, CodingError> {
    mode.validate()?;
    let nonzero: Vec<u64> = nv.counts.iter().copied().filter(|&c| c > 0).collect();
    Ok(code_length_sparse(&nonzero, nv.categories(), mode))
}

/// Code length of a block given only its non-empty counts and its category
/// dimension `m`. `mode` must already be validated.
pub fn code_length_sparse(nonzero: &[u64], categories: usize, mode: CodeMode) -> f64 {
    let total: u64 = nonzero.iter().sum();
    if total == 0 {
        return 0.0;
    }
    data_bits(nonzero, total, mode) + model_bits(total, categories, nonzero.len(), mode)
}

/// Part of the code length that depends on the individual non-empty counts.
pub fn data_bits(nonzero: &[u64], total: u64, mode: CodeMode) -> f64 {
    if total == 0 {
        return 0.0;
    }
    match mode {
        CodeMode::Exact | CodeMode::Sparse => {
            let n = total as f64;
            nonzero
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let c = c as f64;
                    c * (n / c).log2()
                })
                .sum()
        }
        CodeMode::Combinatorial => {
            let denom: f64 = nonzero
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| log2_factorial(c))
                .sum();
            log2_factorial(total) - denom
        }
        CodeMode::Incremental { alpha } => {
            let base = ln_gamma(alpha);
            let ln: f64 = nonzero
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| ln_gamma(c as f64 + alpha) - base)
                .sum();
            -ln / std::f64::consts::LN_2
        }
    }
}

/// Part of the code length that depends only on `(n, m, m')`.
pub fn model_bits(total: u64, categories: usize, nonzero: usize, mode: CodeMode) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let log_n = (total as f64).log2();
    let m = categories as f64;
    match mode {
        CodeMode::Exact => (m - 1.0) / 2.0 * log_n,
        CodeMode::Sparse => (nonzero as f64 - 1.0) / 2.0 * log_n + m,
        CodeMode::Combinatorial => (m - 1.0) * log_n,
        CodeMode::Incremental { alpha } => {
            let ma = m * alpha;
            (ln_gamma(total as f64 + ma) - ln_gamma(ma)) / std::f64::consts::LN_2
        }
    }
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn log2_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0) / std::f64::consts::LN_2
}
