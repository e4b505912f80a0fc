use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{grid_value, EnvState, Environment, StepResult};
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, ActionVector};
use crate::Rng;

/// Classic cart-pole constants (Euler integration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
    pub max_steps: usize,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CartPoleMode {
    /// Two actions: push left / push right with the full force.
    Discrete,
    /// `C` actions on the uniform grid, force `force_mag * a`.
    Continuous { c: usize },
}

/// One Euler step of the cart-pole equations of motion.
pub fn cartpole_euler_step(state: [f64; 4], force: f64, cfg: &CartPoleConfig) -> [f64; 4] {
    let [x, x_dot, theta, theta_dot] = state;
    let total_mass = cfg.cart_mass + cfg.pole_mass;
    let polemass_length = cfg.pole_mass * cfg.half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (cfg.gravity * sin - cos * temp)
        / (cfg.half_length * (4.0 / 3.0 - cfg.pole_mass * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
    [
        x + cfg.dt * x_dot,
        x_dot + cfg.dt * x_acc,
        theta + cfg.dt * theta_dot,
        theta_dot + cfg.dt * theta_acc,
    ]
}

#[derive(Debug, Clone)]
pub struct CartPole {
    cfg: CartPoleConfig,
    mode: CartPoleMode,
    state: [f64; 4],
    steps: usize,
    done: bool,
    rng: Rng,
}

impl CartPole {
    pub fn new(cfg: CartPoleConfig, mode: CartPoleMode, seed: u64) -> Result<Self> {
        if let CartPoleMode::Continuous { c } = mode {
            if c < 2 {
                return Err(Error::InvalidConfig(format!("continuous cart-pole needs C >= 2, got {c}")));
            }
        }
        Ok(Self {
            cfg,
            mode,
            state: [0.0; 4],
            steps: 0,
            done: true,
            rng: crate::seeded_rng(seed),
        })
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Places the system in an arbitrary state with a fresh step counter.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    pub fn force_for(&self, action: &ActionVector) -> Result<f64> {
        action.check(self.action_space())?;
        Ok(match self.mode {
            CartPoleMode::Discrete => {
                if action.0[0] == 0 {
                    -self.cfg.force_mag
                } else {
                    self.cfg.force_mag
                }
            }
            CartPoleMode::Continuous { c } => self.cfg.force_mag * grid_value(action.0[0], c),
        })
    }
}

impl Environment for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        match self.mode {
            CartPoleMode::Discrete => ActionSpace { k: 1, c: 2 },
            CartPoleMode::Continuous { c } => ActionSpace { k: 1, c },
        }
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn reset(&mut self) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = self.rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let force = self.force_for(action)?;
        self.state = cartpole_euler_step(self.state, force, &self.cfg);
        self.steps += 1;
        let [x, _, theta, _] = self.state;
        let failed = x.abs() > self.cfg.x_threshold || theta.abs() > self.cfg.theta_threshold;
        self.done = failed || self.steps >= self.cfg.max_steps;
        Ok(StepResult {
            next_state: self.state.to_vec(),
            reward: 1.0,
            done: self.done,
        })
    }

    fn snapshot(&self) -> Result<EnvState> {
        Ok(EnvState {
            physics: self.state.to_vec(),
            steps: self.steps,
            done: self.done,
            rng: self.rng.clone(),
        })
    }

    fn restore(&mut self, s: &EnvState) -> Result<()> {
        self.state = s
            .physics
            .as_slice()
            .try_into()
            .map_err(|_| Error::InvalidConfig("cart-pole snapshot needs 4 values".into()))?;
        self.steps = s.steps;
        self.done = s.done;
        self.rng = s.rng.clone();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single step written out term by term from the pole-on-cart Lagrangian.
    fn reference_step(s: [f64; 4], f: f64) -> [f64; 4] {
        let (g, mc, mp, l, dt) = (9.8, 1.0, 0.1, 0.5, 0.02);
        let m = mc + mp;
        let th = s[2];
        let w = s[3];
        let num = g * th.sin() + th.cos() * ((-f - mp * l * w * w * th.sin()) / m);
        let den = l * (4.0 / 3.0 - mp * th.cos().powi(2) / m);
        let alpha = num / den;
        let acc = (f + mp * l * (w * w * th.sin() - alpha * th.cos())) / m;
        [s[0] + dt * s[1], s[1] + dt * acc, s[2] + dt * w, s[3] + dt * alpha]
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let next = cartpole_euler_step([0.0; 4], 0.0, &CartPoleConfig::default());
        assert!(next.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_reference_integrator() {
        let mut rng = crate::seeded_rng(4);
        for _ in 0..50 {
            let s = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.2..0.2),
                rng.random_range(-1.0..1.0),
            ];
            let f = rng.random_range(-10.0..10.0);
            let a = cartpole_euler_step(s, f, &CartPoleConfig::default());
            let b = reference_step(s, f);
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn snapshot_replay_is_bitwise_identical() {
        let mut env = CartPole::new(CartPoleConfig::default(), CartPoleMode::Discrete, 3).unwrap();
        env.reset();
        let snap = env.snapshot().unwrap();
        let actions: Vec<usize> = (0..30).map(|i| (i * 7 % 3 == 0) as usize).collect();
        let run = |env: &mut CartPole| {
            let mut out = Vec::new();
            for &a in &actions {
                let r = env.step(&ActionVector(vec![a])).unwrap();
                out.push(r.clone());
                if r.done {
                    break;
                }
            }
            out
        };
        let first = run(&mut env);
        env.restore(&snap).unwrap();
        let second = run(&mut env);
        assert_eq!(first, second);
        env.restore(&snap).unwrap();
        assert_eq!(env.snapshot().unwrap(), snap);
    }

    #[test]
    fn terminates_and_rejects_further_steps() {
        let mut env = CartPole::new(CartPoleConfig::default(), CartPoleMode::Discrete, 0).unwrap();
        env.reset();
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(&ActionVector(vec![1])).unwrap().done {
                break;
            }
        }
        assert!(steps < 200);
        assert!(matches!(env.step(&ActionVector(vec![1])), Err(Error::EpisodeDone)));
    }

    #[test]
    fn step_cap_ends_the_episode() {
        let cfg = CartPoleConfig {
            max_steps: 5,
            ..Default::default()
        };
        let mut env = CartPole::new(cfg, CartPoleMode::Continuous { c: 3 }, 0).unwrap();
        env.reset();
        env.set_state([0.0; 4]);
        let middle = ActionVector(vec![1]);
        let dones: Vec<bool> = (0..5).map(|_| env.step(&middle).unwrap().done).collect();
        assert_eq!(dones, vec![false, false, false, false, true]);
    }

    #[test]
    fn continuous_force_follows_grid() {
        let env = CartPole::new(CartPoleConfig::default(), CartPoleMode::Continuous { c: 101 }, 0)
            .unwrap();
        assert_eq!(env.force_for(&ActionVector(vec![0])).unwrap(), -10.0);
        assert_eq!(env.force_for(&ActionVector(vec![50])).unwrap(), 0.0);
        assert_eq!(env.force_for(&ActionVector(vec![100])).unwrap(), 10.0);
    }
}
