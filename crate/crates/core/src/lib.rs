//! Critic-augmented swap-merge policy gradients for `K`-dimensional, `C`-way
//! categorical action spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`approx`]: dense tanh networks with an explicit backward pass and Adam.
//! - [`policy`]: factorized categorical policies sampled through the
//!   Dirichlet argmin reparametrization, plus the 1-D Gaussian used by the
//!   bimodal bandit.
//! - [`arsm`]: swap tables, joint pseudo-actions, the sparse coefficient
//!   tensor and the critic / Monte-Carlo gradient estimators built on them.
//! - [`critic`]: replay buffer, expected-SARSA and Monte-Carlo targets, the
//!   Bellman regression and soft target networks.
//! - [`baselines`]: REINFORCE, GAE and A2C.
//! - [`trpo`]: Fisher-vector products, conjugate gradient and the trust-region step.
//! - [`envs`]: CartPole (discrete and continuous force), Acrobot and the bimodal bandit.
//! - [`trainer`]: episode collection and the training drivers.
//! - [`verify`]: brute-force oracles and Monte-Carlo harnesses.

pub mod approx;
pub mod arsm;
pub mod baselines;
pub mod critic;
pub mod envs;
mod error;
pub mod policy;
pub mod stats;
pub mod trainer;
pub mod trajectory;
pub mod trpo;
pub mod verify;

pub use approx::{Adam, Mlp, ParameterGradient, ParameterVector};
pub use error::{Error, Result};
pub use policy::{ActionSpace, ActionVector, DirichletMatrix, PolicyLogits};
pub use trainer::{Algorithm, EnvKind, EpisodeLog, RunConfig, Trainer};

/// Seeded generator used everywhere randomness is drawn.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
