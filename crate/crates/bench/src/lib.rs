//! Fixtures shared by the benchmarks.

use carsm::critic::on_policy_targets;
use carsm::trainer::{collect_episode, EnvKind, RunConfig};
use carsm::trajectory::Trajectory;
use carsm::{Mlp, Result};

/// A continuous-force CartPole episode under a random policy, its
/// discounted returns and the policy that produced it.
pub struct EpisodeFixture {
    pub trajectory: Trajectory,
    pub returns: Vec<f64>,
    pub policy: Mlp,
    pub critic: Mlp,
    pub c: usize,
}

pub fn episode_fixture(c: usize, seed: u64) -> Result<EpisodeFixture> {
    let cfg = RunConfig {
        env: EnvKind::CartpoleCont,
        c: Some(c),
        ..RunConfig::default()
    };
    let mut env = cfg.build_env(seed)?;
    let policy = Mlp::new(&[4, 64, 64, c], seed)?;
    let critic = Mlp::new(&[5, 64, 64, 1], seed + 1)?;
    let mut rng = carsm::seeded_rng(seed);
    let trajectory = collect_episode(env.as_mut(), &policy, &mut rng, None, false)?;
    let returns = on_policy_targets(&trajectory.rewards(), 0.99);
    Ok(EpisodeFixture {
        trajectory,
        returns,
        policy,
        critic,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_consistent() {
        let f = episode_fixture(11, 3).unwrap();
        assert!(!f.trajectory.is_empty());
        assert_eq!(f.returns.len(), f.trajectory.len());
        assert_eq!(f.policy.output_dim(), f.c);
    }
}
