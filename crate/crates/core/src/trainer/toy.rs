//! Bimodal bandit comparison between a 21-way categorical policy trained by
//! swap-merge gradients and a Gaussian policy trained by reparametrization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::approx::{Adam, ParameterGradient, ParameterVector};
use crate::arsm::{f_matrix, g_tensor_step, joint_pseudo_set, pseudo_tables};
use crate::envs::{bandit_reward, bandit_reward_slope, grid_value, BanditConfig};
use crate::error::{Error, Result};
use crate::policy::{
    action_probs, entropy_grad, gaussian_sample, sample_dirichlet, select_action, ActionSpace, GaussianPolicyParams,
    PolicyLogits,
};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyPolicy {
    Discrete,
    Gaussian,
}

impl std::str::FromStr for ToyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Self::Discrete),
            "gaussian" => Ok(Self::Gaussian),
            _ => Err(Error::InvalidConfig(format!("unknown toy policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub bandit: BanditConfig,
    pub policy: ToyPolicy,
    /// Grid size of the categorical policy and of the heatmap.
    pub choices: usize,
    pub trials: usize,
    /// Total samples per trial.
    pub samples: usize,
    /// Samples per update.
    pub batch: usize,
    pub lr_discrete: f64,
    pub lr_gaussian: f64,
    pub alpha0_discrete: f64,
    pub alpha0_gaussian: f64,
    pub seed: u64,
    /// Record one heatmap row every this many iterations.
    pub heatmap_every: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            bandit: BanditConfig::centered(),
            policy: ToyPolicy::Discrete,
            choices: 21,
            trials: 100,
            samples: 500_000,
            batch: 100,
            lr_discrete: 0.03,
            lr_gaussian: 0.03,
            alpha0_discrete: 1.0,
            alpha0_gaussian: 1.0,
            seed: 0,
            heatmap_every: 1,
        }
    }
}

impl ToyConfig {
    pub fn iterations(&self) -> usize {
        self.samples / self.batch
    }

    pub fn validate(&self) -> Result<()> {
        self.bandit.validate()?;
        if self.choices < 2 || self.batch == 0 || self.trials == 0 || self.heatmap_every == 0 {
            return Err(Error::InvalidConfig(format!("invalid toy settings {self:?}")));
        }
        if self.iterations() == 0 {
            return Err(Error::InvalidConfig("fewer samples than one batch".into()));
        }
        Ok(())
    }

    /// Entropy coefficient at iteration `i`: `alpha0 (1 - i / i_max)^2`.
    pub fn alpha_at(&self, i: usize) -> f64 {
        let alpha0 = match self.policy {
            ToyPolicy::Discrete => self.alpha0_discrete,
            ToyPolicy::Gaussian => self.alpha0_gaussian,
        };
        let frac = 1.0 - i as f64 / self.iterations() as f64;
        alpha0 * frac * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyOutcome {
    Global,
    Inferior,
    Unconverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrial {
    pub outcome: ToyOutcome,
    /// Final policy mass on each grid bin.
    pub final_density: Vec<f64>,
    /// Final `phi` (discrete) or `(mu, sigma)` (Gaussian).
    pub final_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub policy: ToyPolicy,
    pub trials: Vec<ToyTrial>,
    pub global: usize,
    pub inferior: usize,
    pub unconverged: usize,
    /// Recorded iteration indices, one per heatmap row.
    pub heatmap_iterations: Vec<usize>,
    /// Trial-averaged bin mass, `rows x choices`.
    pub heatmap: Array2<f64>,
}

/// Bin mass of a Gaussian on the grid, tails folded into the end bins.
fn gaussian_bins(p: &GaussianPolicyParams, c: usize) -> Vec<f64> {
    let half = 1.0 / (c - 1) as f64;
    let cdf = |x: f64| normal_cdf((x - p.mu) / p.sigma);
    (0..c)
        .map(|i| {
            let g = grid_value(i, c);
            let lo = if i == 0 { 0.0 } else { cdf(g - half) };
            let hi = if i + 1 == c { 1.0 } else { cdf(g + half) };
            hi - lo
        })
        .collect()
}

/// Which optimum, if any, holds more than half the mass within one grid step.
fn classify(mass_near: impl Fn(f64) -> f64, cfg: &BanditConfig) -> ToyOutcome {
    if mass_near(cfg.left_optimum()) > 0.5 {
        ToyOutcome::Global
    } else if mass_near(cfg.right_optimum()) > 0.5 {
        ToyOutcome::Inferior
    } else {
        ToyOutcome::Unconverged
    }
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    crate::verify::attempt_seed(seed, trial + 1)
}

/// Runs one trial; `on_density` sees the bin mass before each recorded update.
pub fn toy_trial(cfg: &ToyConfig, trial: usize, mut on_density: impl FnMut(usize, &[f64])) -> Result<ToyTrial> {
    cfg.validate()?;
    let mut rng = crate::seeded_rng(trial_seed(cfg.seed, trial));
    let c = cfg.choices;
    let step = 2.0 / (c - 1) as f64;
    match cfg.policy {
        ToyPolicy::Discrete => {
            let space = ActionSpace { k: 1, c };
            let mut phi = ParameterVector::zeros(c);
            let mut opt = Adam::new(c, cfg.lr_discrete)?;
            for i in 0..cfg.iterations() {
                let logits = PolicyLogits::from_flat(1, c, phi.0.clone())?;
                if i % cfg.heatmap_every == 0 {
                    on_density(i, action_probs(&logits).as_slice().expect("contiguous"));
                }
                let mut g = Array2::<f64>::zeros((1, c));
                for _ in 0..cfg.batch {
                    let d = sample_dirichlet(space, &mut rng);
                    let a = select_action(&logits, &d)?;
                    let tables = pseudo_tables(&logits, &d)?;
                    let set = joint_pseudo_set(&tables, &a)?;
                    let y = bandit_reward(grid_value(a.0[0], c), &cfg.bandit, &mut rng)?;
                    let f = f_matrix(
                        &set,
                        |acts| {
                            acts.iter()
                                .map(|x| bandit_reward(grid_value(x.0[0], c), &cfg.bandit, &mut rng))
                                .collect()
                        },
                        y,
                    )?;
                    g += &g_tensor_step(&f, &d, &tables)?;
                }
                g /= cfg.batch as f64;
                g.scaled_add(cfg.alpha_at(i), &entropy_grad(&logits));
                let descent = ParameterGradient(g.iter().map(|v| -v).collect());
                phi = opt.step(&phi, &descent)?;
            }
            let logits = PolicyLogits::from_flat(1, c, phi.0.clone())?;
            let probs = action_probs(&logits).row(0).to_vec();
            let near = |opt: f64| {
                (0..c)
                    .filter(|&i| (grid_value(i, c) - opt).abs() <= step + 1e-9)
                    .map(|i| probs[i])
                    .sum()
            };
            Ok(ToyTrial {
                outcome: classify(near, &cfg.bandit),
                final_density: probs.clone(),
                final_params: phi.into_inner(),
            })
        }
        ToyPolicy::Gaussian => {
            // Parameters are (mu, ln sigma); the policy starts centred on the
            // intersection with unit spread.
            let mut theta = ParameterVector(vec![cfg.bandit.m, 0.0]);
            let mut opt = Adam::new(2, cfg.lr_gaussian)?;
            let params = |t: &ParameterVector| GaussianPolicyParams::new(t[0], t[1].exp());
            for i in 0..cfg.iterations() {
                let p = params(&theta)?;
                if i % cfg.heatmap_every == 0 {
                    on_density(i, &gaussian_bins(&p, c));
                }
                let (mut g_mu, mut g_log_sigma) = (0.0, 0.0);
                for _ in 0..cfg.batch {
                    let (eps, a) = gaussian_sample(&p, &mut rng)?;
                    if !(-1.0..=1.0).contains(&a) {
                        continue;
                    }
                    let slope = bandit_reward_slope(a, &cfg.bandit);
                    g_mu += slope;
                    g_log_sigma += slope * eps * p.sigma;
                }
                let n = cfg.batch as f64;
                // Entropy is ln sigma + const, so its ln-sigma derivative is 1.
                let ascent = [g_mu / n, g_log_sigma / n + cfg.alpha_at(i)];
                theta = opt.step(&theta, &ParameterGradient(ascent.iter().map(|v| -v).collect()))?;
                if !theta.is_finite() {
                    return Err(Error::NonFinite("gaussian toy parameters"));
                }
            }
            let p = params(&theta)?;
            let near = |opt: f64| normal_cdf((opt + step - p.mu) / p.sigma) - normal_cdf((opt - step - p.mu) / p.sigma);
            Ok(ToyTrial {
                outcome: classify(near, &cfg.bandit),
                final_density: gaussian_bins(&p, c),
                final_params: vec![p.mu, p.sigma],
            })
        }
    }
}

/// Runs every trial and averages the per-iteration densities.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyReport> {
    cfg.validate()?;
    let iterations: Vec<usize> = (0..cfg.iterations()).step_by(cfg.heatmap_every).collect();
    let mut heatmap = Array2::<f64>::zeros((iterations.len(), cfg.choices));
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let trial = toy_trial(cfg, t, |i, density| {
            let row = i / cfg.heatmap_every;
            for (dst, src) in heatmap.row_mut(row).iter_mut().zip(density) {
                *dst += src;
            }
        })?;
        trials.push(trial);
    }
    heatmap /= cfg.trials as f64;
    let count = |o: ToyOutcome| trials.iter().filter(|t| t.outcome == o).count();
    Ok(ToyReport {
        policy: cfg.policy,
        global: count(ToyOutcome::Global),
        inferior: count(ToyOutcome::Inferior),
        unconverged: count(ToyOutcome::Unconverged),
        trials,
        heatmap_iterations: iterations,
        heatmap,
    })
}
