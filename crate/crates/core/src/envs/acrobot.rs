use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EnvState, Environment, StepResult};
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, ActionVector};
use crate::Rng;

/// Two-link underactuated pendulum constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrobotConfig {
    pub dt: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub gravity: f64,
    pub max_steps: usize,
}

impl Default for AcrobotConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            gravity: 9.8,
            max_steps: 500,
        }
    }
}

const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone)]
pub struct Acrobot {
    cfg: AcrobotConfig,
    state: [f64; 4],
    steps: usize,
    done: bool,
    rng: Rng,
}

fn wrap(x: f64) -> f64 {
    let span = 2.0 * PI;
    let mut v = x;
    while v > PI {
        v -= span;
    }
    while v < -PI {
        v += span;
    }
    v
}

impl Acrobot {
    pub fn new(cfg: AcrobotConfig, seed: u64) -> Self {
        Self {
            cfg,
            state: [0.0; 4],
            steps: 0,
            done: true,
            rng: crate::seeded_rng(seed),
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    fn derivs(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let c = &self.cfg;
        let (m1, m2, l1, lc1, lc2) = (c.link_mass_1, c.link_mass_2, c.link_length_1, c.link_com_1, c.link_com_2);
        let (i1, i2, g) = (c.link_moi, c.link_moi, c.gravity);
        let [t1, t2, dt1, dt2] = s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (t1 + t2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin()
            - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
            + (m1 * lc1 + m2 * l1) * g * (t1 - PI / 2.0).cos()
            + phi2;
        let ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddt1 = -(d2 * ddt2 + phi1) / d1;
        [dt1, dt2, ddt1, ddt2]
    }

    fn rk4(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let h = self.cfg.dt;
        let add = |a: [f64; 4], b: [f64; 4], scale: f64| {
            [a[0] + scale * b[0], a[1] + scale * b[1], a[2] + scale * b[2], a[3] + scale * b[3]]
        };
        let k1 = self.derivs(s, torque);
        let k2 = self.derivs(add(s, k1, h / 2.0), torque);
        let k3 = self.derivs(add(s, k2, h / 2.0), torque);
        let k4 = self.derivs(add(s, k3, h), torque);
        let mut out = s;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    fn observation(&self) -> Vec<f64> {
        let [t1, t2, dt1, dt2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), dt1, dt2]
    }

    fn reached_goal(&self) -> bool {
        let [t1, t2, _, _] = self.state;
        -t1.cos() - (t2 + t1).cos() > 1.0
    }
}

impl Environment for Acrobot {
    fn observation_dim(&self) -> usize {
        6
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace { k: 1, c: 3 }
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn reset(&mut self) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = self.rng.random_range(-0.1..0.1);
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        action.check(self.action_space())?;
        let torque = TORQUES[action.0[0]];
        let mut s = self.rk4(self.state, torque);
        s[0] = wrap(s[0]);
        s[1] = wrap(s[1]);
        s[2] = s[2].clamp(-self.cfg.max_vel_1, self.cfg.max_vel_1);
        s[3] = s[3].clamp(-self.cfg.max_vel_2, self.cfg.max_vel_2);
        self.state = s;
        self.steps += 1;
        let goal = self.reached_goal();
        self.done = goal || self.steps >= self.cfg.max_steps;
        Ok(StepResult {
            next_state: self.observation(),
            reward: if goal { 0.0 } else { -1.0 },
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
            .map_err(|_| Error::InvalidConfig("acrobot snapshot needs 4 values".into()))?;
        self.steps = s.steps;
        self.done = s.done;
        self.rng = s.rng.clone();
        Ok(())
    }
}
