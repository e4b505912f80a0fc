use serde::{Deserialize, Serialize};

use crate::baselines::A2cConfig;
use crate::critic::{ExpectationConfig, ReplayBuffer};
use crate::envs::{Acrobot, AcrobotConfig, BanditConfig, BanditEnv, CartPole, CartPoleConfig, CartPoleMode, Environment};
use crate::error::{Error, Result};
use crate::trpo::TrpoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Carsm,
    A2c,
    ArsmMc,
    /// Trust-region step along the actor-critic direction.
    Trpo,
    /// Trust-region step along the critic-based swap-merge direction.
    TrpoCarsm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Carsm, Self::A2c, Self::ArsmMc, Self::Trpo, Self::TrpoCarsm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Carsm => "carsm",
            Self::A2c => "a2c",
            Self::ArsmMc => "arsm-mc",
            Self::Trpo => "trpo",
            Self::TrpoCarsm => "trpo-carsm",
        }
    }

    pub fn uses_critic(self) -> bool {
        matches!(self, Self::Carsm | Self::TrpoCarsm)
    }

    pub fn uses_value_net(self) -> bool {
        matches!(self, Self::A2c | Self::Trpo)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Cartpole,
    CartpoleCont,
    Acrobot,
    Bandit,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [Self::Cartpole, Self::CartpoleCont, Self::Acrobot, Self::Bandit];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cartpole => "cartpole",
            Self::CartpoleCont => "cartpole-cont",
            Self::Acrobot => "acrobot",
            Self::Bandit => "bandit",
        }
    }

    /// Number of choices when none is configured.
    pub fn default_choices(self) -> usize {
        match self {
            Self::Cartpole => 2,
            Self::CartpoleCont => 101,
            Self::Acrobot => 3,
            Self::Bandit => 21,
        }
    }

    fn fixed_choices(self) -> Option<usize> {
        match self {
            Self::Cartpole => Some(2),
            Self::Acrobot => Some(3),
            _ => None,
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown environment {s:?}")))
    }
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    /// Choices per action dimension; `None` uses the environment default.
    pub c: Option<usize>,
    pub seed: u64,
    pub episodes: usize,
    pub lr_policy: f64,
    /// Learning rate of the action-value critic or of the state-value net.
    pub lr_critic: f64,
    pub n_critic: usize,
    pub tau: f64,
    pub gamma: f64,
    pub alpha0: f64,
    /// Multiplicative entropy-coefficient decay per policy update.
    pub alpha_decay: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    pub expectation: ExpectationConfig,
    pub trpo: TrpoConfig,
    pub a2c: A2cConfig,
    /// Rollouts allowed per update for the Monte-Carlo variant.
    pub rollout_budget: usize,
    /// Rollout length cap; `None` uses the episode cap.
    pub rollout_horizon: Option<usize>,
    /// Stop once a full 100-episode window averages at least this return.
    pub stop_at_avg: Option<f64>,
    /// Fill the `wall_ms` column; off by default so logs are reproducible.
    pub record_wall_clock: bool,
    pub bandit: BanditConfig,
    /// Episode cap override for the CartPole variants.
    pub max_steps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Carsm,
            env: EnvKind::Cartpole,
            c: None,
            seed: 0,
            episodes: 1000,
            lr_policy: 1e-3,
            lr_critic: 1e-2,
            n_critic: 50,
            tau: 0.01,
            gamma: 0.99,
            alpha0: 0.01,
            alpha_decay: 0.999,
            hidden: vec![64, 64],
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            expectation: ExpectationConfig::default(),
            trpo: TrpoConfig::default(),
            a2c: A2cConfig::default(),
            rollout_budget: 16,
            rollout_horizon: None,
            stop_at_avg: None,
            record_wall_clock: false,
            bandit: BanditConfig::default(),
            max_steps: None,
        }
    }
}

impl RunConfig {
    pub fn choices(&self) -> usize {
        self.c.unwrap_or(self.env.default_choices())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.episodes == 0 {
            return bad("episode budget must be positive".into());
        }
        for (name, v) in [("lr_policy", self.lr_policy), ("lr_critic", self.lr_critic)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau = {}", self.tau));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma = {}", self.gamma));
        }
        if self.alpha0.is_nan() || self.alpha0 < 0.0 || !(self.alpha_decay > 0.0 && self.alpha_decay <= 1.0) {
            return bad(format!("alpha0 = {}, alpha_decay = {}", self.alpha0, self.alpha_decay));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer of width zero".into());
        }
        let c = self.choices();
        if c < 2 {
            return bad(format!("C = {c}"));
        }
        if let Some(fixed) = self.env.fixed_choices() {
            if c != fixed {
                return bad(format!("{} has exactly {fixed} actions, got C = {c}", self.env.name()));
            }
        }
        if self.algorithm == Algorithm::ArsmMc && self.rollout_horizon == Some(0) {
            return bad("rollout horizon must be positive".into());
        }
        self.trpo.validate()?;
        if self.env == EnvKind::Bandit {
            self.bandit.validate()?;
        }
        Ok(())
    }

    pub fn build_env(&self, seed: u64) -> Result<Box<dyn Environment>> {
        let mut cp = CartPoleConfig::default();
        if let Some(m) = self.max_steps {
            cp.max_steps = m;
        }
        Ok(match self.env {
            EnvKind::Cartpole => Box::new(CartPole::new(cp, CartPoleMode::Discrete, seed)?),
            EnvKind::CartpoleCont => Box::new(CartPole::new(cp, CartPoleMode::Continuous { c: self.choices() }, seed)?),
            EnvKind::Acrobot => Box::new(Acrobot::new(AcrobotConfig::default(), seed)),
            EnvKind::Bandit => Box::new(BanditEnv::new(self.bandit, self.choices(), seed)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        for e in EnvKind::ALL {
            assert_eq!(e.name().parse::<EnvKind>().unwrap(), e);
        }
        assert!("ppo".parse::<Algorithm>().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"algorithm": "a2c", "env": "cartpole-cont", "c": 11}"#).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::A2c);
        assert_eq!(cfg.choices(), 11);
        assert_eq!(cfg.tau, 0.01);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig { episodes: 0, ..RunConfig::default() },
            RunConfig { c: Some(3), ..RunConfig::default() },
            RunConfig { tau: 2.0, ..RunConfig::default() },
            RunConfig { gamma: 0.0, ..RunConfig::default() },
            RunConfig { lr_policy: -1.0, ..RunConfig::default() },
            RunConfig { alpha_decay: 1.5, ..RunConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
