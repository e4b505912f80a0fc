//! REINFORCE and advantage actor-critic estimators.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::approx::{Adam, Mlp, ParameterGradient};
use crate::arsm::logit_pullback;
use crate::error::{check_len, Error, Result};
use crate::policy::{entropy, entropy_grad, log_prob, log_prob_grad};
use crate::trajectory::Trajectory;

/// Score-function gradient `sum_t w_t * grad log pi(a_t | s_t)` (ascent).
pub fn score_function_gradient(policy: &Mlp, trajectory: &Trajectory, weights: &[f64]) -> Result<ParameterGradient> {
    check_len("score_function_gradient weights", trajectory.len(), weights.len())?;
    let coefs = trajectory
        .steps
        .iter()
        .zip(weights)
        .map(|(s, &w)| log_prob_grad(&s.logits, &s.action).map(|g| g * w))
        .collect::<Result<Vec<_>>>()?;
    logit_pullback(policy, &trajectory.state_matrix(), &coefs)
}

/// REINFORCE: score-function gradient weighted by discounted returns.
pub fn reinforce_gradient(policy: &Mlp, trajectory: &Trajectory, gamma: f64) -> Result<ParameterGradient> {
    let y = crate::critic::on_policy_targets(&trajectory.rewards(), gamma);
    score_function_gradient(policy, trajectory, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub normalize: bool,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            normalize: true,
        }
    }
}

/// Generalized advantage estimates. `values` carries one bootstrap entry
/// past the last step.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], cfg: &GaeConfig) -> Result<Vec<f64>> {
    check_len("gae values", rewards.len() + 1, values.len())?;
    check_len("gae dones", rewards.len(), dones.len())?;
    if !(0.0..=1.0).contains(&cfg.lambda) || !(0.0..=1.0).contains(&cfg.gamma) {
        return Err(Error::OutOfRange(format!("gamma {} / lambda {}", cfg.gamma, cfg.lambda)));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + cfg.gamma * values[t + 1] * live - values[t];
        acc = delta + cfg.gamma * cfg.lambda * live * acc;
        adv[t] = acc;
    }
    if cfg.normalize && n > 1 {
        normalize(&mut adv);
    }
    Ok(adv)
}

/// Zero mean, unit (population) variance; left centered if the spread vanishes.
pub fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in x.iter_mut() {
        *v -= mean;
        if sd > 1e-12 {
            *v /= sd;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2cConfig {
    pub gae: GaeConfig,
    pub value_coef: f64,
    pub v_iter: usize,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gae: GaeConfig::default(),
            value_coef: 0.5,
            v_iter: 10,
        }
    }
}

/// Components of the actor-critic loss on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `L = L_policy + c * L_value - alpha * H` with
/// `L_policy = -mean(A_t log pi(a_t|s_t))` and `L_value = mean((y_t - V(s_t))^2)`.
pub fn a2c_loss(
    value_net: &Mlp,
    trajectory: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    value_coef: f64,
    alpha: f64,
) -> Result<A2cLoss> {
    check_len("a2c advantages", trajectory.len(), advantages.len())?;
    check_len("a2c returns", trajectory.len(), returns.len())?;
    let n = trajectory.len() as f64;
    let mut policy = 0.0;
    let mut ent = 0.0;
    for (s, &a) in trajectory.steps.iter().zip(advantages) {
        policy -= a * log_prob(&s.logits, &s.action)?;
        ent += entropy(&s.logits);
    }
    let v = value_net.forward_batch(trajectory.state_matrix().view())?;
    let value: f64 = returns.iter().zip(v.column(0)).map(|(y, v)| (y - v).powi(2)).sum::<f64>() / n;
    let (policy, ent) = (policy / n, ent / n);
    Ok(A2cLoss {
        policy,
        value,
        entropy: ent,
        total: policy + value_coef * value - alpha * ent,
    })
}

/// Value-network predictions for every state plus a bootstrap for the final
/// next-state (zero when the episode terminated).
pub fn bootstrap_values(value_net: &Mlp, trajectory: &Trajectory) -> Result<Vec<f64>> {
    let mut v = if trajectory.is_empty() {
        Vec::new()
    } else {
        value_net.forward_batch(trajectory.state_matrix().view())?.column(0).to_vec()
    };
    let last = match trajectory.steps.last() {
        Some(s) if !s.done => value_net.forward(&s.next_state)?[0],
        _ => 0.0,
    };
    v.push(last);
    Ok(v)
}

/// Descent gradient of `L_policy - alpha * H` with respect to the policy.
pub fn a2c_policy_gradient(policy: &Mlp, trajectory: &Trajectory, advantages: &[f64], alpha: f64) -> Result<ParameterGradient> {
    check_len("a2c advantages", trajectory.len(), advantages.len())?;
    let n = trajectory.len() as f64;
    let coefs = trajectory
        .steps
        .iter()
        .zip(advantages)
        .map(|(s, &a)| {
            let lp = log_prob_grad(&s.logits, &s.action)?;
            Ok(-(lp * a + entropy_grad(&s.logits) * alpha) / n)
        })
        .collect::<Result<Vec<Array2<f64>>>>()?;
    logit_pullback(policy, &trajectory.state_matrix(), &coefs)
}

/// Loss diagnostics of one [`a2c_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cStats {
    pub loss: A2cLoss,
    pub final_value_loss: f64,
}

/// `v_iter` Adam steps on `value_coef * mean((y_t - V(s_t))^2)`; returns the
/// unscaled loss before the last step.
pub fn fit_value(
    value_net: &mut Mlp,
    value_opt: &mut Adam,
    trajectory: &Trajectory,
    returns: &[f64],
    cfg: &A2cConfig,
) -> Result<f64> {
    check_len("fit_value returns", trajectory.len(), returns.len())?;
    let states = trajectory.state_matrix();
    let n = trajectory.len() as f64;
    let mut last = f64::NAN;
    for _ in 0..cfg.v_iter {
        let cache = value_net.forward_cached(states.view())?;
        let out = cache.output();
        let mut g = Array2::zeros((trajectory.len(), 1));
        let mut l = 0.0;
        for (t, y) in returns.iter().enumerate() {
            let r = out[[t, 0]] - y;
            l += r * r / n;
            g[[t, 0]] = cfg.value_coef * 2.0 * r / n;
        }
        last = l;
        let grad = value_net.backward_batch(&cache, g.view())?.params;
        let next = value_opt.step(&value_net.params(), &grad)?;
        value_net.set_params(&next)?;
    }
    Ok(last)
}

/// One policy step on the frozen-advantage loss and `v_iter` value steps on
/// the same batch.
#[allow(clippy::too_many_arguments)]
pub fn a2c_update(
    trajectory: &Trajectory,
    policy: &mut Mlp,
    value_net: &mut Mlp,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    cfg: &A2cConfig,
    alpha: f64,
) -> Result<A2cStats> {
    if trajectory.is_empty() {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    let values = bootstrap_values(value_net, trajectory)?;
    let advantages = gae(&trajectory.rewards(), &values, &trajectory.dones(), &cfg.gae)?;
    let returns = crate::critic::on_policy_targets(&trajectory.rewards(), cfg.gae.gamma);
    let loss = a2c_loss(value_net, trajectory, &advantages, &returns, cfg.value_coef, alpha)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("a2c loss"));
    }

    let pg = a2c_policy_gradient(policy, trajectory, &advantages, alpha)?;
    let next = policy_opt.step(&policy.params(), &pg)?;
    policy.set_params(&next)?;

    let final_value_loss = fit_value(value_net, value_opt, trajectory, &returns, cfg)?;
    Ok(A2cStats { loss, final_value_loss })
}
