//! Trust-region policy steps over factorized categorical policies.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::approx::{ForwardCache, Mlp, ParameterGradient, ParameterVector};
use crate::error::{check_len, Error, Result};
use crate::policy::{action_probs, ActionSpace, PolicyLogits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpoConfig {
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub damping: f64,
    pub backtrack_steps: usize,
    pub backtrack_ratio: f64,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.01,
            cg_iters: 10,
            cg_tol: 1e-10,
            damping: 0.1,
            backtrack_steps: 10,
            backtrack_ratio: 0.5,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_kl.is_nan() || self.max_kl <= 0.0 || self.damping < 0.0 || !(0.0..1.0).contains(&self.backtrack_ratio) {
            return Err(Error::InvalidConfig(format!("invalid trust-region settings {self:?}")));
        }
        Ok(())
    }
}

const PROB_FLOOR: f64 = 1e-12;

/// `sum_k sum_c p_old ln(p_old / p_new)` for one state.
pub fn kl_factored_categorical(old: &Array2<f64>, new: &Array2<f64>) -> Result<f64> {
    check_len("kl rows", old.nrows(), new.nrows())?;
    check_len("kl cols", old.ncols(), new.ncols())?;
    Ok(old
        .iter()
        .zip(new.iter())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p.ln() - q.max(PROB_FLOOR).ln()))
        .sum())
}

/// Per-state `K x C` probabilities of a network over a state batch.
pub fn batch_probs(policy: &Mlp, states: &Array2<f64>, space: ActionSpace) -> Result<Vec<Array2<f64>>> {
    let out = policy.forward_batch(states.view())?;
    out.rows()
        .into_iter()
        .map(|r| PolicyLogits::from_flat(space.k, space.c, r.to_vec()).map(|l| action_probs(&l)))
        .collect()
}

/// Mean KL from `old` probabilities to the policy's current ones.
pub fn mean_kl(old: &[Array2<f64>], policy: &Mlp, states: &Array2<f64>, space: ActionSpace) -> Result<f64> {
    check_len("mean_kl states", old.len(), states.nrows())?;
    if old.is_empty() {
        return Ok(0.0);
    }
    let new = batch_probs(policy, states, space)?;
    let mut total = 0.0;
    for (o, n) in old.iter().zip(&new) {
        total += kl_factored_categorical(o, n)?;
    }
    Ok(total / old.len() as f64)
}

/// Damped Fisher information of the mean KL at the current parameters, in
/// Gauss-Newton form `(1/N) J^T M J v + damping v` with the softmax
/// covariance `M_k = diag(p_k) - p_k p_k^T` per state and dimension.
pub struct FisherOperator<'a> {
    policy: &'a Mlp,
    states: &'a Array2<f64>,
    cache: ForwardCache,
    probs: Vec<Array2<f64>>,
    damping: f64,
}

impl<'a> FisherOperator<'a> {
    pub fn new(policy: &'a Mlp, states: &'a Array2<f64>, space: ActionSpace, damping: f64) -> Result<Self> {
        check_len("FisherOperator output", space.k * space.c, policy.output_dim())?;
        let cache = policy.forward_cached(states.view())?;
        let probs = cache
            .output()
            .rows()
            .into_iter()
            .map(|r| PolicyLogits::from_flat(space.k, space.c, r.to_vec()).map(|l| action_probs(&l)))
            .collect::<Result<_>>()?;
        Ok(Self {
            policy,
            states,
            cache,
            probs,
            damping,
        })
    }

    pub fn apply(&self, v: &[f64]) -> Result<ParameterVector> {
        check_len("FisherOperator vector", self.policy.num_params(), v.len())?;
        let n = self.states.nrows();
        if n == 0 {
            return Ok(ParameterVector(v.iter().map(|x| self.damping * x).collect()));
        }
        let (_, jv) = self.policy.jvp(self.states.view(), v)?;
        let mut u = Array2::zeros(jv.raw_dim());
        for (row, p) in self.probs.iter().enumerate() {
            let (k_dim, c_dim) = p.dim();
            for k in 0..k_dim {
                let base = k * c_dim;
                let mean: f64 = (0..c_dim).map(|c| p[[k, c]] * jv[[row, base + c]]).sum();
                for c in 0..c_dim {
                    u[[row, base + c]] = p[[k, c]] * (jv[[row, base + c]] - mean) / n as f64;
                }
            }
        }
        let mut hv = self.policy.backward_batch(&self.cache, u.view())?.params.into_inner();
        for (h, x) in hv.iter_mut().zip(v) {
            *h += self.damping * x;
        }
        Ok(ParameterVector(hv))
    }
}

/// Conjugate gradient for `H x = b` with a symmetric positive definite `H`.
pub fn conjugate_gradient(
    mut apply_h: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr.sqrt() <= tol {
            break;
        }
        let hp = apply_h(&p)?;
        check_len("conjugate_gradient operator", b.len(), hp.len())?;
        let php = dot(&p, &hp);
        if !php.is_finite() || php <= 0.0 {
            return Err(Error::ConjugateGradient(format!("curvature p^T H p = {php}")));
        }
        let alpha = rr / php;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() {
            return Err(Error::ConjugateGradient("non-finite residual".into()));
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(x)
}

/// What a trust-region step did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrpoOutcome {
    pub accepted: bool,
    /// Mean KL(old || new) on the batch after the step (0 if rejected).
    pub kl: f64,
    /// Halvings applied before acceptance.
    pub backtracks: usize,
    /// `0.5 * step^T H step` of the full step.
    pub quadratic_kl: f64,
    /// Linearized improvement `g^T step` of the accepted step.
    pub expected_improvement: f64,
}

/// Natural-gradient step along the ascent direction `gradient`, scaled to
/// the KL radius and shrunk by backtracking until the measured KL is inside
/// the radius and the linearized objective improves. Leaves the policy
/// untouched when no step qualifies.
pub fn trpo_step(
    policy: &mut Mlp,
    gradient: &ParameterGradient,
    states: &Array2<f64>,
    space: ActionSpace,
    cfg: &TrpoConfig,
) -> Result<TrpoOutcome> {
    cfg.validate()?;
    check_len("trpo_step gradient", policy.num_params(), gradient.len())?;
    if gradient.iter().all(|&g| g == 0.0) || states.nrows() == 0 {
        return Ok(TrpoOutcome::default());
    }
    let old_params = policy.params();
    let old_probs = batch_probs(policy, states, space)?;
    let (full_step, quad) = {
        let fisher = FisherOperator::new(policy, states, space, cfg.damping)?;
        let d = conjugate_gradient(|v| fisher.apply(v).map(ParameterVector::into_inner), gradient, cfg.cg_iters, cfg.cg_tol)?;
        let hd = fisher.apply(&d)?;
        let dhd: f64 = d.iter().zip(hd.iter()).map(|(a, b)| a * b).sum();
        if !dhd.is_finite() || dhd <= 0.0 {
            return Err(Error::ConjugateGradient(format!("d^T H d = {dhd}")));
        }
        let scale = (2.0 * cfg.max_kl / dhd).sqrt();
        let step: Vec<f64> = d.iter().map(|x| x * scale).collect();
        (step, 0.5 * scale * scale * dhd)
    };
    let mut frac = 1.0;
    for backtracks in 0..=cfg.backtrack_steps {
        let candidate: Vec<f64> = old_params.iter().zip(&full_step).map(|(p, s)| p + frac * s).collect();
        let improvement = frac * gradient.dot(&full_step);
        policy.set_params(&candidate)?;
        let kl = mean_kl(&old_probs, policy, states, space)?;
        if kl.is_finite() && kl <= cfg.max_kl && improvement > 0.0 {
            return Ok(TrpoOutcome {
                accepted: true,
                kl,
                backtracks,
                quadratic_kl: quad,
                expected_improvement: improvement,
            });
        }
        frac *= cfg.backtrack_ratio;
    }
    policy.set_params(&old_params)?;
    Ok(TrpoOutcome {
        quadratic_kl: quad,
        ..TrpoOutcome::default()
    })
}
