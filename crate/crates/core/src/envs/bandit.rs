use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{grid_value, EnvState, Environment, StepResult};
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, ActionVector};
use crate::Rng;

/// Two quadratic bumps on `[-1, 1]` meeting at `m`; the left one is taller.
///
/// Noise parameters are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    pub noise_sd1: f64,
    pub noise_sd2: f64,
}

impl BanditConfig {
    /// Peaks at -0.9 (10.25) and 0.1 (10); the better peak is narrow.
    pub fn narrow_left() -> Self {
        Self {
            m: -0.8,
            c1: 40.0 / (1.8 * 1.8),
            c2: 41.0 / (0.2 * 0.2),
            noise_sd1: 2.0,
            noise_sd2: 1.0,
        }
    }

    /// Peaks at -0.5 (10.25) and 0.5 (10).
    pub fn centered() -> Self {
        Self {
            m: 0.0,
            c1: 40.0,
            c2: 41.0,
            noise_sd1: 2.0,
            noise_sd2: 1.0,
        }
    }

    /// Same peak heights as the two presets, for any intersection point.
    pub fn with_intersection(m: f64) -> Self {
        let left = (1.0 + m) / 2.0;
        let right = (1.0 - m) / 2.0;
        Self {
            m,
            c1: 40.0 / (4.0 * right * right),
            c2: 41.0 / (4.0 * left * left),
            noise_sd1: 2.0,
            noise_sd2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > -1.0 && self.m < 1.0) {
            return Err(Error::InvalidConfig(format!("bandit intersection m = {}", self.m)));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidConfig("bandit curvatures must be positive".into()));
        }
        if !(self.noise_sd1 >= 0.0 && self.noise_sd2 >= 0.0) {
            return Err(Error::InvalidConfig("bandit noise must be nonnegative".into()));
        }
        if self.left_peak_value() <= self.right_peak_value() {
            return Err(Error::InvalidConfig(
                "the left peak must be the global optimum".into(),
            ));
        }
        Ok(())
    }

    pub fn left_optimum(&self) -> f64 {
        (self.m - 1.0) / 2.0
    }

    pub fn right_optimum(&self) -> f64 {
        (1.0 + self.m) / 2.0
    }

    pub fn left_peak_value(&self) -> f64 {
        self.c2 * (1.0 + self.m).powi(2) / 4.0
    }

    pub fn right_peak_value(&self) -> f64 {
        self.c1 * (1.0 - self.m).powi(2) / 4.0
    }
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self::centered()
    }
}

fn check_action(a: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("bandit action {a} outside [-1, 1]")))
    }
}

/// Noise-free reward.
pub fn bandit_mean_reward(a: f64, cfg: &BanditConfig) -> f64 {
    if a >= cfg.m {
        -cfg.c1 * (a - 1.0) * (a - cfg.m)
    } else {
        -cfg.c2 * (a + 1.0) * (a - cfg.m)
    }
}

/// Derivative of the noise-free reward. At `a = m` the right branch is used.
pub fn bandit_reward_slope(a: f64, cfg: &BanditConfig) -> f64 {
    if a >= cfg.m {
        -cfg.c1 * (2.0 * a - 1.0 - cfg.m)
    } else {
        -cfg.c2 * (2.0 * a + 1.0 - cfg.m)
    }
}

pub fn bandit_reward(a: f64, cfg: &BanditConfig, rng: &mut Rng) -> Result<f64> {
    check_action(a)?;
    let z: f64 = StandardNormal.sample(rng);
    let sd = if a >= cfg.m { cfg.noise_sd1 } else { cfg.noise_sd2 };
    Ok(bandit_mean_reward(a, cfg) + sd * z)
}

/// One-step episodes: the `C` actions sit on the uniform grid over `[-1, 1]`
/// and the observation is the constant `[1.0]`.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    cfg: BanditConfig,
    c: usize,
    done: bool,
    rng: Rng,
}

impl BanditEnv {
    pub fn new(cfg: BanditConfig, c: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if c < 2 {
            return Err(Error::InvalidConfig(format!("bandit grid needs C >= 2, got {c}")));
        }
        Ok(Self {
            cfg,
            c,
            done: true,
            rng: crate::seeded_rng(seed),
        })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.cfg
    }
}

impl Environment for BanditEnv {
    fn observation_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace { k: 1, c: self.c }
    }

    fn max_steps(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f64> {
        self.done = false;
        vec![1.0]
    }

    fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        action.check(self.action_space())?;
        let a = grid_value(action.0[0], self.c);
        let reward = bandit_reward(a, &self.cfg, &mut self.rng)?;
        self.done = true;
        Ok(StepResult {
            next_state: vec![1.0],
            reward,
            done: true,
        })
    }

    fn snapshot(&self) -> Result<EnvState> {
        Ok(EnvState {
            physics: Vec::new(),
            steps: usize::from(self.done),
            done: self.done,
            rng: self.rng.clone(),
        })
    }

    fn restore(&mut self, s: &EnvState) -> Result<()> {
        self.done = s.done;
        self.rng = s.rng.clone();
        Ok(())
    }
}
