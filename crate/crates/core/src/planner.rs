//! Value iteration on estimated MDPs and the optimistic exploration extension.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdpcore::{estimate_with_bonus, CountTensor, MdpEstimate};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;
pub const DEFAULT_GAMMA_CAP: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("discount {0} is outside [0, 1)")]
    InvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("state {state} is not one of the {states} planned states")]
    UnknownState { state: usize, states: usize },
    #[error("exploration bonus {bonus} must exceed the largest reward {max_reward}")]
    BonusTooSmall { bonus: f64, max_reward: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub gamma: f64,
    /// Largest change of `V` in the final sweep.
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

fn sweep(est: &MdpEstimate, gamma: f64, v: &[f64], q: &mut [Vec<f64>], next: &mut [f64]) {
    for (s, row) in est.rows.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for (a, entries) in row.iter().enumerate() {
            let value: f64 = entries.iter().map(|&(s2, p, r)| p * (r + gamma * v[s2])).sum();
            q[s][a] = value;
            best = best.max(value);
        }
        next[s] = if row.is_empty() { 0.0 } else { best };
    }
}

/// Synchronous value iteration from `V ≡ 0`, until the sup-norm change of a
/// sweep is at most `tol` or `max_sweeps` sweeps have run.
pub fn value_iteration(est: &MdpEstimate, gamma: f64, tol: f64, max_sweeps: usize) -> Result<ValueFunction, PlannerError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(PlannerError::InvalidGamma(gamma));
    }
    if !(tol > 0.0) {
        return Err(PlannerError::InvalidTolerance(tol));
    }
    let m = est.state_count();
    let mut v = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut q = vec![vec![0.0; est.actions]; m];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweep(est, gamma, &v, &mut q, &mut next);
        sweeps += 1;
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            break;
        }
    }
    if m == 0 {
        residual = 0.0;
    }
    Ok(ValueFunction {
        q,
        v,
        gamma,
        residual,
        sweeps,
        converged: residual <= tol,
    })
}

/// `max_s |(T V)_s - V_s|` for the Bellman optimality operator `T`.
pub fn bellman_residual(est: &MdpEstimate, vf: &ValueFunction) -> f64 {
    let m = est.state_count();
    let mut q = vec![vec![0.0; est.actions]; m];
    let mut next = vec![0.0; m];
    sweep(est, vf.gamma, &vf.v, &mut q, &mut next);
    vf.v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Greedy action in `s`; ties go to the lowest action index.
pub fn best_action(vf: &ValueFunction, s: usize) -> Result<usize, PlannerError> {
    let q = vf.q.get(s).ok_or(PlannerError::UnknownState {
        state: s,
        states: vf.q.len(),
    })?;
    let mut best = 0;
    for (a, &value) in q.iter().enumerate() {
        if value > q[best] {
            best = a;
        }
    }
    Ok(best)
}

/// The absorbing high-reward state attached to every `(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub enabled: bool,
    /// Fixed `R_max^e`; when absent it is
    /// `scale · (1-γ)^{-horizon_power} · |S×A|^{size_power} · max(max R, 1)`.
    pub bonus: Option<f64>,
    pub scale: f64,
    pub horizon_power: i32,
    pub size_power: i32,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            bonus: None,
            scale: 1.0,
            horizon_power: 1,
            size_power: 1,
        }
    }
}

impl ExplorationConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// `R_max^e` for `states` real states (the exploration state is added
    /// to the count here).
    pub fn bonus_for(&self, gamma: f64, states: usize, actions: usize, max_reward: f64) -> Result<f64, PlannerError> {
        let bonus = match self.bonus {
            Some(b) => b,
            None => {
                let size = ((states + 1) * actions) as f64;
                self.scale * (1.0 - gamma).powi(-self.horizon_power) * size.powi(self.size_power) * max_reward.max(1.0)
            }
        };
        if !(bonus > max_reward) {
            return Err(PlannerError::BonusTooSmall { bonus, max_reward });
        }
        Ok(bonus)
    }
}

/// Frequency estimates over counts augmented with the exploration state:
/// one virtual transition from every `(s, a)` into it, paying `R_max^e` on
/// entry and on every step while absorbed.
pub fn extend_exploration(ct: &CountTensor, cfg: &ExplorationConfig, gamma: f64) -> Result<MdpEstimate, PlannerError> {
    let alphabet = ct.alphabet();
    let bonus = cfg.bonus_for(gamma, ct.state_count(), alphabet.actions(), alphabet.max_reward_value())?;
    Ok(estimate_with_bonus(ct, Some(bonus)))
}
