use serde::{Deserialize, Serialize};

use super::{ParameterGradient, ParameterVector};
use crate::error::{check_len, Error, Result};

/// Adam optimizer state. The caller passes the gradient of a loss; the step
/// descends it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {lr}")));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(
        &mut self,
        params: &ParameterVector,
        grad: &ParameterGradient,
    ) -> Result<ParameterVector> {
        check_len("adam params", self.m.len(), params.len())?;
        check_len("adam grad", self.m.len(), grad.len())?;
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let mut out = params.clone();
        for i in 0..out.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            out[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(out)
    }
}
