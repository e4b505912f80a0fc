//! Factorized categorical policies over `K` action dimensions with `C` choices
//! each, sampled by the Dirichlet argmin reparametrization, and the 1-D
//! Gaussian policy used by the bimodal bandit comparison.
//!
//! Action indices are 0-based in code. [`ActionVector::from_one_based`] and
//! [`ActionVector::to_one_based`] convert from the 1-based notation used in
//! documentation and CLI output.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Rng;

/// Shape of a multidimensional discrete action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    /// Number of action dimensions.
    pub k: usize,
    /// Choices per dimension.
    pub c: usize,
}

impl ActionSpace {
    pub fn new(k: usize, c: usize) -> Result<Self> {
        if k == 0 || c == 0 {
            return Err(Error::InvalidConfig(format!("action space K={k}, C={c}")));
        }
        Ok(Self { k, c })
    }

    /// `C^K`, saturating.
    pub fn joint_size(&self) -> usize {
        (0..self.k).fold(1usize, |acc, _| acc.saturating_mul(self.c))
    }

    /// Every joint action in mixed-radix order, dimension 0 most significant.
    pub fn enumerate(&self) -> Vec<ActionVector> {
        let n = self.joint_size();
        (0..n).map(|i| self.decode(i)).collect()
    }

    pub fn decode(&self, mut index: usize) -> ActionVector {
        let mut a = vec![0; self.k];
        for slot in a.iter_mut().rev() {
            *slot = index % self.c;
            index /= self.c;
        }
        ActionVector(a)
    }

    pub fn encode(&self, action: &ActionVector) -> usize {
        action.0.iter().fold(0, |acc, &a| acc * self.c + a)
    }
}

/// `K x C` logits for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLogits(pub Array2<f64>);

/// `K x C` matrix whose rows are independent `Dir(1_C)` draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMatrix(pub Array2<f64>);

/// One chosen index per action dimension (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<usize>);

impl ActionVector {
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        indices
            .iter()
            .map(|&i| {
                i.checked_sub(1)
                    .ok_or_else(|| Error::OutOfRange("1-based action index 0".into()))
            })
            .collect::<Result<Vec<_>>>()
            .map(ActionVector)
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|a| a + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, space: ActionSpace) -> Result<()> {
        if self.0.len() != space.k {
            return Err(Error::Shape {
                context: "action vector",
                expected: space.k,
                actual: self.0.len(),
            });
        }
        match self.0.iter().find(|&&a| a >= space.c) {
            Some(a) => Err(Error::OutOfRange(format!(
                "action index {} with C = {}",
                a + 1,
                space.c
            ))),
            None => Ok(()),
        }
    }
}

impl PolicyLogits {
    pub fn from_flat(k: usize, c: usize, values: Vec<f64>) -> Result<Self> {
        Array2::from_shape_vec((k, c), values)
            .map(PolicyLogits)
            .map_err(|_| Error::InvalidConfig(format!("{k}x{c} logits from a flat vector")))
    }

    pub fn space(&self) -> ActionSpace {
        let (k, c) = self.0.dim();
        ActionSpace { k, c }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl DirichletMatrix {
    pub fn space(&self) -> ActionSpace {
        let (k, c) = self.0.dim();
        ActionSpace { k, c }
    }
}

/// Draws `K` independent `Dir(1_C)` rows by normalizing unit exponentials.
pub fn sample_dirichlet(space: ActionSpace, rng: &mut Rng) -> DirichletMatrix {
    let mut pi = Array2::<f64>::zeros((space.k, space.c));
    for mut row in pi.rows_mut() {
        let mut total = 0.0;
        for v in row.iter_mut() {
            let mut e: f64 = Exp1.sample(rng);
            while e == 0.0 {
                e = Exp1.sample(rng);
            }
            *v = e;
            total += e;
        }
        row.mapv_inplace(|v| v / total);
    }
    DirichletMatrix(pi)
}

/// `argmin_i (ln pi_i - phi_i)`, lowest index on ties.
pub(crate) fn argmin_score(log_pi: impl Iterator<Item = f64>, phi: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, (lp, &f)) in log_pi.zip(phi.iter()).enumerate() {
        let s = lp - f;
        if s < best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

fn check_same_space(logits: &PolicyLogits, dirichlet: &DirichletMatrix) -> Result<()> {
    let (a, b) = (logits.space(), dirichlet.space());
    if a != b {
        return Err(Error::Shape {
            context: "logits vs Dirichlet matrix",
            expected: a.k * a.c,
            actual: b.k * b.c,
        });
    }
    Ok(())
}

/// `a_k = argmin_i (ln pi_ki - phi_ki)` for every dimension.
pub fn select_action(logits: &PolicyLogits, dirichlet: &DirichletMatrix) -> Result<ActionVector> {
    check_same_space(logits, dirichlet)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("policy logits"));
    }
    let actions = logits
        .0
        .rows()
        .into_iter()
        .zip(dirichlet.0.rows())
        .map(|(phi, pi)| argmin_score(pi.iter().map(|p| p.ln()), phi))
        .collect();
    Ok(ActionVector(actions))
}

/// Row-wise softmax with max subtraction.
pub fn action_probs(logits: &PolicyLogits) -> Array2<f64> {
    let mut p = logits.0.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    p
}

/// Row-wise log-softmax.
pub fn log_probs(logits: &PolicyLogits) -> Array2<f64> {
    let mut lp = logits.0.clone();
    for mut row in lp.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    lp
}

/// `sum_k ln softmax(phi_k)[a_k]`.
pub fn log_prob(logits: &PolicyLogits, action: &ActionVector) -> Result<f64> {
    action.check(logits.space())?;
    let lp = log_probs(logits);
    Ok(action.0.iter().enumerate().map(|(k, &a)| lp[[k, a]]).sum())
}

/// `d log_prob / d phi`: `1[c = a_k] - p_kc`.
pub fn log_prob_grad(logits: &PolicyLogits, action: &ActionVector) -> Result<Array2<f64>> {
    action.check(logits.space())?;
    let mut g = action_probs(logits);
    g.mapv_inplace(|p| -p);
    for (k, &a) in action.0.iter().enumerate() {
        g[[k, a]] += 1.0;
    }
    Ok(g)
}

/// Sum of per-dimension entropies in nats.
pub fn entropy(logits: &PolicyLogits) -> f64 {
    let p = action_probs(logits);
    let lp = log_probs(logits);
    -p.iter()
        .zip(lp.iter())
        .map(|(&pi, &li)| if pi > 0.0 { pi * li } else { 0.0 })
        .sum::<f64>()
}

/// `d entropy / d phi_kc = -p_kc (ln p_kc + H_k)`.
pub fn entropy_grad(logits: &PolicyLogits) -> Array2<f64> {
    let p = action_probs(logits);
    let lp = log_probs(logits);
    let mut g = Array2::zeros(p.raw_dim());
    for k in 0..p.nrows() {
        let h: f64 = -p
            .row(k)
            .iter()
            .zip(lp.row(k))
            .map(|(&pi, &li)| if pi > 0.0 { pi * li } else { 0.0 })
            .sum::<f64>();
        for c in 0..p.ncols() {
            g[[k, c]] = -p[[k, c]] * (lp[[k, c]] + h);
        }
    }
    g
}

/// Samples one action per dimension from row-wise probabilities by inversion.
pub fn sample_categorical(probs: &Array2<f64>, rng: &mut Rng) -> ActionVector {
    let actions = probs
        .axis_iter(Axis(0))
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            row.len() - 1
        })
        .collect();
    ActionVector(actions)
}

/// Diagonal Gaussian over a scalar action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicyParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Gradient of the reparametrized expected reward with respect to `(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGrad {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianPolicyParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() && self.mu.is_finite() {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!(
                "Gaussian policy mu = {}, sigma = {}",
                self.mu, self.sigma
            )))
        }
    }
}

/// Standard-normal noise `eps` and the action `mu + sigma * eps`.
pub fn gaussian_sample(params: &GaussianPolicyParams, rng: &mut Rng) -> Result<(f64, f64)> {
    params.validate()?;
    let eps: f64 = StandardNormal.sample(rng);
    Ok((eps, params.mu + params.sigma * eps))
}

pub fn gaussian_logprob(params: &GaussianPolicyParams, a: f64) -> Result<f64> {
    params.validate()?;
    let z = (a - params.mu) / params.sigma;
    Ok(-0.5 * z * z - params.sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// `0.5 ln(2 pi e sigma^2)`.
pub fn gaussian_entropy(params: &GaussianPolicyParams) -> Result<f64> {
    params.validate()?;
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * params.sigma.powi(2)).ln())
}

/// Pathwise gradient of `r(mu + sigma * eps)` given the reward slope `dr/da`
/// at the sampled action.
pub fn gaussian_reparam_grad(
    params: &GaussianPolicyParams,
    eps: f64,
    reward_slope: impl Fn(f64) -> f64,
) -> Result<GaussianGrad> {
    params.validate()?;
    let slope = reward_slope(params.mu + params.sigma * eps);
    Ok(GaussianGrad {
        mu: slope,
        sigma: slope * eps,
    })
}
