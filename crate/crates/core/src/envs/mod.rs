//! Native environments with exact snapshot/restore.
//!
//! Each environment owns its generator, so a snapshot captures everything
//! needed to replay a trajectory bit for bit.

mod acrobot;
mod bandit;
mod cartpole;

pub use acrobot::{Acrobot, AcrobotConfig};
pub use bandit::{bandit_mean_reward, bandit_reward, bandit_reward_slope, BanditConfig, BanditEnv};
pub use cartpole::{cartpole_euler_step, CartPole, CartPoleConfig, CartPoleMode};

use crate::error::{Error, Result};
use crate::policy::{ActionSpace, ActionVector};
use crate::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Full restorable state of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub physics: Vec<f64>,
    pub steps: usize,
    pub done: bool,
    pub rng: Rng,
}

pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    /// Episode step cap.
    fn max_steps(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &ActionVector) -> Result<StepResult>;
    fn snapshot(&self) -> Result<EnvState> {
        Err(Error::NoSnapshot)
    }
    fn restore(&mut self, _state: &EnvState) -> Result<()> {
        Err(Error::NoSnapshot)
    }
}

/// Grid value of a 0-based index on the uniform `C`-point grid over `[-1, 1]`.
pub fn grid_value(index: usize, c: usize) -> f64 {
    if c < 2 {
        return 0.0;
    }
    (2.0 * index as f64 - (c - 1) as f64) / (c - 1) as f64
}

/// Nearest grid index for a point in `[-1, 1]`.
pub fn grid_index(value: f64, c: usize) -> usize {
    if c < 2 {
        return 0;
    }
    let raw = ((value + 1.0) * (c - 1) as f64 / 2.0).round();
    raw.clamp(0.0, (c - 1) as f64) as usize
}

/// Maps each action index onto `{(-C+1)/(C-1), (-C+3)/(C-1), ..., 1}`.
pub fn discretize_action(action: &ActionVector, c: usize) -> Result<Vec<f64>> {
    if c < 2 {
        return Err(Error::InvalidConfig(format!("discretization needs C >= 2, got {c}")));
    }
    action
        .0
        .iter()
        .map(|&i| {
            if i < c {
                Ok(grid_value(i, c))
            } else {
                Err(Error::OutOfRange(format!("action index {} with C = {c}", i + 1)))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn grid_endpoints_and_midpoint() {
        let a = ActionVector::from_one_based(&[1, 11, 6]).unwrap();
        assert_eq!(discretize_action(&a, 11).unwrap(), vec![-1.0, 1.0, 0.0]);
        let all = ActionVector(vec![0, 1, 2]);
        assert_eq!(discretize_action(&all, 3).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(discretize_action(&ActionVector(vec![11]), 11).is_err());
        assert!(discretize_action(&ActionVector(vec![0]), 1).is_err());
    }

    proptest! {
        #[test]
        fn grid_is_a_bijection(c in 2usize..2000, frac in 0.0f64..1.0) {
            let i = ((c - 1) as f64 * frac) as usize;
            let v = grid_value(i, c);
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert_eq!(grid_index(v, c), i);
        }
    }
}
