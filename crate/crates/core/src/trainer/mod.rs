//! Episode collection and the training drivers.

mod config;
mod output;
mod toy;

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng as _;

pub use config::{Algorithm, EnvKind, RunConfig};
pub use output::{write_episode_csv, write_heatmap_csv, EPISODE_CSV_HEADER, HEATMAP_CSV_HEADER};
pub use toy::{run_toy, toy_trial, ToyConfig, ToyOutcome, ToyPolicy, ToyReport, ToyTrial};

use crate::approx::{Adam, Mlp};
use crate::arsm::{arsm_mc_gradient, carsm_gradient, RolloutConfig};
use crate::baselines::{a2c_policy_gradient, a2c_update, bootstrap_values, fit_value, gae};
use crate::critic::{
    critic_eval_batch, critic_inputs, critic_update, on_policy_targets, soft_update, CriticConfig,
    ReplayBuffer, TargetNets, Transition,
};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policy::{sample_dirichlet, select_action, ActionSpace, PolicyLogits};
use crate::trajectory::{Step, Trajectory};
use crate::trpo::trpo_step;
use crate::Rng;

/// Runs one episode with the Dirichlet argmin sampler.
///
/// Every transition is appended to `buffer` when one is given; with
/// `snapshots` the environment state before each step is kept for rollouts.
pub fn collect_episode(
    env: &mut dyn Environment,
    policy: &Mlp,
    rng: &mut Rng,
    mut buffer: Option<&mut ReplayBuffer>,
    snapshots: bool,
) -> Result<Trajectory> {
    let space = env.action_space();
    let mut state = env.reset();
    let mut traj = Trajectory::default();
    loop {
        if snapshots {
            traj.snapshots.push(env.snapshot()?);
        }
        let logits = PolicyLogits::from_flat(space.k, space.c, policy.forward(&state)?)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("policy logits"));
        }
        let dirichlet = sample_dirichlet(space, rng);
        let action = select_action(&logits, &dirichlet)?;
        let r = env.step(&action)?;
        if let Some(buf) = buffer.as_deref_mut() {
            buf.push(Transition {
                s: state.clone(),
                a: action.clone(),
                r: r.reward,
                s_next: r.next_state.clone(),
                done: r.done,
            });
        }
        traj.steps.push(Step {
            state,
            dirichlet: Some(dirichlet),
            logits,
            action,
            reward: r.reward,
            next_state: r.next_state.clone(),
            done: r.done,
        });
        if r.done {
            return Ok(traj);
        }
        state = r.next_state;
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpisodeLog {
    /// 1-based.
    pub episode: usize,
    /// Environment steps plus rollout steps, cumulative.
    pub timesteps: u64,
    pub env_steps: u64,
    pub pseudo_steps: u64,
    pub length: usize,
    pub episode_return: f64,
    /// Mean return over the last (up to) 100 episodes.
    pub avg100: f64,
    /// Entropy coefficient used for this episode's update.
    pub alpha: f64,
    pub critic_loss: Option<f64>,
    /// Zero unless wall-clock recording is enabled.
    pub wall_ms: u64,
    /// Rollouts spent by this update.
    pub rollouts: usize,
    /// Measured KL of a trust-region update, when one was accepted.
    pub kl: Option<f64>,
    pub trpo_accepted: Option<bool>,
}

pub const AVERAGE_WINDOW: usize = 100;

struct CriticState {
    net: Mlp,
    opt: Adam,
    targets: TargetNets,
    buffer: ReplayBuffer,
}

struct ValueState {
    net: Mlp,
    opt: Adam,
}

/// Iterator over episode logs of one run.
pub struct Trainer {
    cfg: RunConfig,
    env: Box<dyn Environment>,
    space: ActionSpace,
    policy: Mlp,
    policy_opt: Adam,
    critic: Option<CriticState>,
    value: Option<ValueState>,
    alpha: f64,
    episode: usize,
    env_steps: u64,
    pseudo_steps: u64,
    window: VecDeque<f64>,
    rng: Rng,
    start: Instant,
    finished: bool,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut seeder = crate::seeded_rng(cfg.seed);
        let env_seed: u64 = seeder.random();
        let net_seed: u64 = seeder.random();
        let sample_seed: u64 = seeder.random();
        let env = cfg.build_env(env_seed)?;
        let space = env.action_space();
        let obs = env.observation_dim();
        let mut net_rng = crate::seeded_rng(net_seed);

        let mut sizes = vec![obs];
        sizes.extend(&cfg.hidden);
        sizes.push(space.k * space.c);
        let policy = Mlp::with_rng(&sizes, &mut net_rng)?;
        let policy_opt = Adam::new(policy.num_params(), cfg.lr_policy)?;

        let critic = if cfg.algorithm.uses_critic() {
            let mut sizes = vec![obs + space.k];
            sizes.extend(&cfg.hidden);
            sizes.push(1);
            let net = Mlp::with_rng(&sizes, &mut net_rng)?;
            Some(CriticState {
                opt: Adam::new(net.num_params(), cfg.lr_critic)?,
                targets: TargetNets::new(&policy, &net, cfg.tau)?,
                buffer: ReplayBuffer::new(cfg.replay_capacity)?,
                net,
            })
        } else {
            None
        };
        let value = if cfg.algorithm.uses_value_net() {
            let mut sizes = vec![obs];
            sizes.extend(&cfg.hidden);
            sizes.push(1);
            let net = Mlp::with_rng(&sizes, &mut net_rng)?;
            Some(ValueState {
                opt: Adam::new(net.num_params(), cfg.lr_critic)?,
                net,
            })
        } else {
            None
        };
        Ok(Self {
            alpha: cfg.alpha0,
            cfg,
            env,
            space,
            policy,
            policy_opt,
            critic,
            value,
            episode: 0,
            env_steps: 0,
            pseudo_steps: 0,
            window: VecDeque::with_capacity(AVERAGE_WINDOW),
            rng: crate::seeded_rng(sample_seed),
            start: Instant::now(),
            finished: false,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn action_space(&self) -> ActionSpace {
        self.space
    }

    /// Runs to completion and collects every log row.
    pub fn run(self) -> Result<Vec<EpisodeLog>> {
        self.collect()
    }

    /// Collects one episode and applies one update.
    pub fn step_episode(&mut self) -> Result<EpisodeLog> {
        let snapshots = self.cfg.algorithm == Algorithm::ArsmMc;
        let buffer = self.critic.as_mut().map(|c| &mut c.buffer);
        let traj = collect_episode(self.env.as_mut(), &self.policy, &mut self.rng, buffer, snapshots)?;
        self.episode += 1;
        self.env_steps += traj.len() as u64;
        let alpha = self.alpha;

        let mut log = EpisodeLog {
            episode: self.episode,
            timesteps: 0,
            env_steps: 0,
            pseudo_steps: 0,
            length: traj.len(),
            episode_return: traj.total_reward(),
            avg100: 0.0,
            alpha,
            critic_loss: None,
            wall_ms: 0,
            rollouts: 0,
            kl: None,
            trpo_accepted: None,
        };
        match self.cfg.algorithm {
            Algorithm::Carsm => {
                let (grad, loss) = self.carsm_direction(&traj, alpha)?;
                log.critic_loss = loss;
                self.ascend(&grad)?;
                self.soft_update()?;
            }
            Algorithm::TrpoCarsm => {
                let (grad, loss) = self.carsm_direction(&traj, alpha)?;
                log.critic_loss = loss;
                let out = trpo_step(&mut self.policy, &grad, &traj.state_matrix(), self.space, &self.cfg.trpo)?;
                log.trpo_accepted = Some(out.accepted);
                log.kl = out.accepted.then_some(out.kl);
                self.soft_update()?;
            }
            Algorithm::A2c => {
                let value = self.value.as_mut().expect("value net for a2c");
                let stats = a2c_update(
                    &traj,
                    &mut self.policy,
                    &mut value.net,
                    &mut self.policy_opt,
                    &mut value.opt,
                    &self.cfg.a2c,
                    alpha,
                )?;
                log.critic_loss = Some(stats.final_value_loss);
            }
            Algorithm::Trpo => {
                let value = self.value.as_mut().expect("value net for trpo");
                let values = bootstrap_values(&value.net, &traj)?;
                let adv = gae(&traj.rewards(), &values, &traj.dones(), &self.cfg.a2c.gae)?;
                let grad = a2c_policy_gradient(&self.policy, &traj, &adv, alpha)?.negated();
                let out = trpo_step(&mut self.policy, &grad, &traj.state_matrix(), self.space, &self.cfg.trpo)?;
                log.trpo_accepted = Some(out.accepted);
                log.kl = out.accepted.then_some(out.kl);
                let returns = on_policy_targets(&traj.rewards(), self.cfg.a2c.gae.gamma);
                log.critic_loss = Some(fit_value(&mut value.net, &mut value.opt, &traj, &returns, &self.cfg.a2c)?);
            }
            Algorithm::ArsmMc => {
                let returns = on_policy_targets(&traj.rewards(), self.cfg.gamma);
                let rc = RolloutConfig {
                    budget: self.cfg.rollout_budget,
                    horizon: self.cfg.rollout_horizon.unwrap_or(self.env.max_steps()),
                    gamma: self.cfg.gamma,
                };
                let est = arsm_mc_gradient(&traj, &returns, self.env.as_mut(), &self.policy, alpha, &rc, &mut self.rng)?;
                log.rollouts = est.rollouts;
                self.pseudo_steps += est.rollout_steps as u64;
                self.ascend(&est.estimate.gradient)?;
            }
        }
        if !self.policy.params().is_finite() {
            return Err(Error::Diverged {
                episode: self.episode,
                what: "policy parameters".into(),
            });
        }
        self.alpha *= self.cfg.alpha_decay;

        if self.window.len() == AVERAGE_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(log.episode_return);
        log.avg100 = self.window.iter().sum::<f64>() / self.window.len() as f64;
        log.env_steps = self.env_steps;
        log.pseudo_steps = self.pseudo_steps;
        log.timesteps = self.env_steps + self.pseudo_steps;
        if self.cfg.record_wall_clock {
            log.wall_ms = self.start.elapsed().as_millis() as u64;
        }
        Ok(log)
    }

    fn carsm_direction(&mut self, traj: &Trajectory, alpha: f64) -> Result<(crate::ParameterGradient, Option<f64>)> {
        let critic = self.critic.as_mut().expect("critic for carsm");
        let returns = on_policy_targets(&traj.rewards(), self.cfg.gamma);
        let on_inputs = critic_inputs(traj.steps.iter().map(|s| (s.state.as_slice(), &s.action)), self.space.c)?;
        let ccfg = CriticConfig {
            gamma: self.cfg.gamma,
            n_critic: self.cfg.n_critic,
            expectation: self.cfg.expectation,
        };
        let losses = critic_update(
            &mut critic.net,
            &mut critic.opt,
            &critic.buffer,
            &on_inputs,
            &returns,
            &critic.targets,
            self.space,
            &ccfg,
            &mut self.rng,
        )?;
        let loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
        if loss.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Diverged {
                episode: self.episode,
                what: "critic loss".into(),
            });
        }
        let c = self.space.c;
        let net = &critic.net;
        let est = carsm_gradient(
            traj,
            &returns,
            &self.policy,
            |reqs| {
                let inputs = critic_inputs(reqs.iter().map(|(t, a)| (traj.steps[*t].state.as_slice(), a)), c)?;
                critic_eval_batch(net, &inputs)
            },
            alpha,
        )?;
        Ok((est.gradient, loss))
    }

    fn ascend(&mut self, grad: &crate::ParameterGradient) -> Result<()> {
        let descent = grad.clone().negated();
        let next = self.policy_opt.step(&self.policy.params(), &descent)?;
        self.policy.set_params(&next)
    }

    fn soft_update(&mut self) -> Result<()> {
        let critic = self.critic.as_mut().expect("critic present");
        soft_update(&mut critic.targets, &self.policy, &critic.net, self.cfg.tau)
    }

    fn reached_target(&self, log: &EpisodeLog) -> bool {
        self.cfg
            .stop_at_avg
            .is_some_and(|t| self.window.len() == AVERAGE_WINDOW && log.avg100 >= t)
    }
}

impl Iterator for Trainer {
    type Item = Result<EpisodeLog>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished || self.episode >= self.cfg.episodes {
            return None;
        }
        let out = self.step_episode();
        match &out {
            Ok(log) => self.finished = self.reached_target(log),
            Err(_) => self.finished = true,
        }
        Some(out)
    }
}

/// First episode at which a full 100-episode window averages at least `threshold`.
pub fn episodes_to_threshold(logs: &[EpisodeLog], threshold: f64) -> Option<usize> {
    logs.iter()
        .find(|l| l.episode >= AVERAGE_WINDOW && l.avg100 >= threshold)
        .map(|l| l.episode)
}
