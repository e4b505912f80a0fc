//! Brute-force oracles and Monte-Carlo harnesses for the gradient estimators.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::approx::ParameterGradient;
use crate::arsm::{f_matrix, g_tensor_step, joint_pseudo_set, pseudo_table, pseudo_tables};
use crate::error::{Error, Result};
use crate::policy::{action_probs, sample_dirichlet, select_action, ActionSpace, ActionVector, PolicyLogits};
use crate::stats::{chi_square_gof, RunningMoments};
use crate::Rng;

/// Largest joint action space the oracles will enumerate.
pub const MAX_ENUMERABLE: usize = 4096;

/// A one-state problem with a known value for every joint action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSpec {
    pub space: ActionSpace,
    /// Indexed by [`ActionSpace::encode`].
    pub q: Vec<f64>,
}

impl BanditSpec {
    pub fn new(space: ActionSpace, q: Vec<f64>) -> Result<Self> {
        if space.joint_size() > MAX_ENUMERABLE {
            return Err(Error::InvalidConfig(format!(
                "{} joint actions exceed the enumeration limit {MAX_ENUMERABLE}",
                space.joint_size()
            )));
        }
        crate::error::check_len("BanditSpec q", space.joint_size(), q.len())?;
        Ok(Self { space, q })
    }

    /// Values drawn uniformly from `[-1, 1]`.
    pub fn random(k: usize, c: usize, rng: &mut Rng) -> Result<Self> {
        let space = ActionSpace::new(k, c)?;
        let q = (0..space.joint_size()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::new(space, q)
    }

    pub fn value(&self, a: &ActionVector) -> f64 {
        self.q[self.space.encode(a)]
    }

    /// `E_{a ~ softmax(phi)} Q(a)` by enumeration.
    pub fn expected_value(&self, logits: &PolicyLogits) -> Result<f64> {
        self.check_logits(logits)?;
        let p = action_probs(logits);
        Ok(self
            .space
            .enumerate()
            .iter()
            .map(|a| self.value(a) * joint_prob(&p, a))
            .sum())
    }

    fn check_logits(&self, logits: &PolicyLogits) -> Result<()> {
        if logits.space() != self.space {
            return Err(Error::Shape {
                context: "BanditSpec logits",
                expected: self.space.k * self.space.c,
                actual: logits.0.len(),
            });
        }
        Ok(())
    }
}

fn joint_prob(p: &Array2<f64>, a: &ActionVector) -> f64 {
    a.0.iter().enumerate().map(|(k, &ak)| p[[k, ak]]).product()
}

/// Exact `d E[Q] / d phi` by enumerating every joint action.
pub fn exact_gradient(spec: &BanditSpec, logits: &PolicyLogits) -> Result<Array2<f64>> {
    spec.check_logits(logits)?;
    let ActionSpace { k, c } = spec.space;
    let p = action_probs(logits);
    let mut g = Array2::zeros((k, c));
    for a in spec.space.enumerate() {
        let q = spec.value(&a);
        let pa = joint_prob(&p, &a);
        for kk in 0..k {
            let ak = a.0[kk];
            // d p_k(a_k) / d phi_kc = p_k(a_k) (1[c = a_k] - p_kc); the other factors stay.
            for cc in 0..c {
                let delta = if cc == ak { 1.0 } else { 0.0 };
                g[[kk, cc]] += q * pa * (delta - p[[kk, cc]]);
            }
        }
    }
    Ok(g)
}

/// One draw of the sparse swap-merge estimator with the exact `Q` table as critic.
pub fn arsm_draw(spec: &BanditSpec, logits: &PolicyLogits, rng: &mut Rng) -> Result<Array2<f64>> {
    let d = sample_dirichlet(spec.space, rng);
    let a = select_action(logits, &d)?;
    let tables = pseudo_tables(logits, &d)?;
    let set = joint_pseudo_set(&tables, &a)?;
    let f = f_matrix(&set, |acts| Ok(acts.iter().map(|x| spec.value(x)).collect()), spec.value(&a))?;
    g_tensor_step(&f, &d, &tables)
}

/// One draw of plain REINFORCE: `Q(a) * d log pi(a) / d phi`.
pub fn reinforce_draw(spec: &BanditSpec, logits: &PolicyLogits, rng: &mut Rng) -> Result<Array2<f64>> {
    let p = action_probs(logits);
    let a = crate::policy::sample_categorical(&p, rng);
    Ok(crate::policy::log_prob_grad(logits, &a)? * spec.value(&a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub mean: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
}

/// Componentwise Monte-Carlo comparison against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub components: Vec<ComponentReport>,
    pub draws: usize,
    pub pass: bool,
}

impl EstimatorReport {
    pub fn max_abs_z(&self) -> f64 {
        self.components.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }

    pub fn z_scores(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.z).collect()
    }
}

pub const Z_THRESHOLD: f64 = 3.0;

fn z_score(mean: f64, se: f64, exact: f64) -> f64 {
    let diff = mean - exact;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * (1.0 + exact.abs()) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Averages `n_draws` estimator outputs and scores them against `exact`.
pub fn mc_estimator_mean(
    mut estimator: impl FnMut(&mut Rng) -> Result<Array2<f64>>,
    exact: &Array2<f64>,
    n_draws: usize,
    rng: &mut Rng,
) -> Result<EstimatorReport> {
    if n_draws < 2 {
        return Err(Error::InvalidConfig("at least two draws are needed".into()));
    }
    let mut moments = vec![RunningMoments::new(); exact.len()];
    for _ in 0..n_draws {
        let g = estimator(rng)?;
        if g.dim() != exact.dim() {
            return Err(Error::Shape {
                context: "mc_estimator_mean draw",
                expected: exact.len(),
                actual: g.len(),
            });
        }
        for (m, &v) in moments.iter_mut().zip(g.iter()) {
            m.push(v);
        }
    }
    let components: Vec<ComponentReport> = moments
        .iter()
        .zip(exact.iter())
        .map(|(m, &e)| ComponentReport {
            mean: m.mean(),
            std_error: m.std_error(),
            exact: e,
            z: z_score(m.mean(), m.std_error(), e),
        })
        .collect();
    let pass = components.iter().all(|c| c.z.abs() <= Z_THRESHOLD);
    Ok(EstimatorReport {
        components,
        draws: n_draws,
        pass,
    })
}

/// Monte-Carlo mean of `(1/C) sum_c Q(a^{c<->j}) (1 - C pi_j)` for a
/// one-dimensional bandit, scored against zero.
pub fn zero_baseline_check(
    spec: &BanditSpec,
    logits: &PolicyLogits,
    j: usize,
    n_draws: usize,
    rng: &mut Rng,
) -> Result<EstimatorReport> {
    spec.check_logits(logits)?;
    let ActionSpace { k, c } = spec.space;
    if k != 1 {
        return Err(Error::InvalidConfig("zero-baseline check needs K = 1".into()));
    }
    if j >= c {
        return Err(Error::OutOfRange(format!("swap coordinate {j} with C = {c}")));
    }
    let exact = Array2::zeros((1, 1));
    mc_estimator_mean(
        |rng| {
            let d = sample_dirichlet(spec.space, rng);
            let table = pseudo_table(logits.0.row(0), d.0.row(0));
            let weight = 1.0 - c as f64 * d.0[[0, j]];
            let mean_q: f64 = (0..c).map(|cc| spec.q[table.get(cc, j)]).sum::<f64>() / c as f64;
            Ok(Array2::from_elem((1, 1), mean_q * weight))
        },
        &exact,
        n_draws,
        rng,
    )
}

/// Central differences of `f` along every coordinate.
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Result<ParameterGradient> {
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite-difference objective"));
        }
        out.push((up - down) / (2.0 * eps));
    }
    Ok(ParameterGradient(out))
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Goodness-of-fit of argmin-sampled actions to `softmax(phi)`, per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub draws: usize,
    pub pass: bool,
}

pub const SAMPLING_P_THRESHOLD: f64 = 0.001;

pub fn reparam_check(logits: &PolicyLogits, n_draws: usize, rng: &mut Rng) -> Result<SamplingReport> {
    let space = logits.space();
    let mut counts = vec![vec![0u64; space.c]; space.k];
    for _ in 0..n_draws {
        let d = sample_dirichlet(space, rng);
        let a = select_action(logits, &d)?;
        for (k, &ak) in a.0.iter().enumerate() {
            counts[k][ak] += 1;
        }
    }
    let p = action_probs(logits);
    let mut statistics = Vec::with_capacity(space.k);
    let mut p_values = Vec::with_capacity(space.k);
    for (k, row) in counts.iter().enumerate() {
        let (s, pv) = chi_square_gof(row, &p.row(k).to_vec())?;
        statistics.push(s);
        p_values.push(pv);
    }
    let pass = p_values.iter().all(|&pv| pv > SAMPLING_P_THRESHOLD);
    Ok(SamplingReport {
        statistics,
        p_values,
        draws: n_draws,
        pass,
    })
}

/// One entry of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub z_scores: Vec<f64>,
    /// Chi-square p-values for sampling checks, relative errors for gradient checks.
    pub extra: Vec<f64>,
    pub pass: bool,
    pub seed: u64,
    pub draws: usize,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub draws: usize,
    pub sampling_draws: usize,
    /// Fresh-seed reruns allowed after a statistical failure.
    pub reruns: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 20_200_701,
            draws: 1_000_000,
            sampling_draws: 100_000,
            reruns: 1,
        }
    }
}

/// Seed used for attempt `attempt` of a check.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(attempt as u64))
}

/// Runs `check` and reruns it on a fresh seed after a failure; it fails only
/// if every attempt fails.
pub fn with_reruns(
    name: &str,
    seed: u64,
    reruns: usize,
    mut check: impl FnMut(u64) -> Result<(bool, Vec<f64>, Vec<f64>, usize)>,
) -> Result<CheckResult> {
    let mut last = None;
    for attempt in 0..=reruns {
        let s = attempt_seed(seed, attempt);
        let (pass, z_scores, extra, draws) = check(s)?;
        let result = CheckResult {
            name: name.to_string(),
            z_scores,
            extra,
            pass,
            seed: s,
            draws,
            attempts: attempt + 1,
        };
        if pass {
            return Ok(result);
        }
        last = Some(result);
    }
    Ok(last.expect("at least one attempt"))
}

/// Random logits in `[-1, 1]` for an action space.
pub fn random_logits(space: ActionSpace, rng: &mut Rng) -> PolicyLogits {
    PolicyLogits(Array2::from_shape_fn((space.k, space.c), |_| rng.random_range(-1.0..=1.0)))
}

/// Swap-merge unbiasedness on a random `K x C` bandit.
pub fn arsm_unbiasedness(k: usize, c: usize, draws: usize, seed: u64) -> Result<EstimatorReport> {
    let mut rng = crate::seeded_rng(seed);
    let spec = BanditSpec::random(k, c, &mut rng)?;
    let logits = random_logits(spec.space, &mut rng);
    let exact = exact_gradient(&spec, &logits)?;
    mc_estimator_mean(|r| arsm_draw(&spec, &logits, r), &exact, draws, &mut rng)
}

/// Zero-expectation of the swap baseline on a random one-dimensional bandit.
pub fn zero_baseline_random(c: usize, draws: usize, seed: u64) -> Result<EstimatorReport> {
    let mut rng = crate::seeded_rng(seed);
    let spec = BanditSpec::random(1, c, &mut rng)?;
    let logits = random_logits(spec.space, &mut rng);
    let j = rng.random_range(0..c);
    zero_baseline_check(&spec, &logits, j, draws, &mut rng)
}

/// Sampling law on random logits with `K = 1`.
pub fn reparam_random(c: usize, draws: usize, seed: u64) -> Result<SamplingReport> {
    let mut rng = crate::seeded_rng(seed);
    let logits = random_logits(ActionSpace::new(1, c)?, &mut rng);
    reparam_check(&logits, draws, &mut rng)
}

/// Relative error of the backward pass through an MLP against central
/// differences of a random linear functional of its output.
pub fn mlp_gradient_error(sizes: &[usize], seed: u64) -> Result<f64> {
    let mut rng = crate::seeded_rng(seed);
    let net = crate::Mlp::with_rng(sizes, &mut rng)?;
    let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let analytic = net.backward(&x, &w)?.params;
    let fd = finite_difference(
        |p| {
            let n = net.with_params(p).expect("same shape");
            n.forward(&x).expect("input fits").iter().zip(&w).map(|(o, w)| o * w).sum()
        },
        &net.params(),
        1e-5,
    )?;
    Ok(relative_error(&analytic, &fd))
}

/// Relative error of the surrogate-loss gradient through a policy network.
pub fn surrogate_gradient_error(obs_dim: usize, k: usize, c: usize, t: usize, seed: u64) -> Result<f64> {
    let mut rng = crate::seeded_rng(seed);
    let net = crate::Mlp::with_rng(&[obs_dim, 16, 16, k * c], &mut rng)?;
    let states = Array2::from_shape_fn((t, obs_dim), |_| rng.random_range(-1.0..1.0));
    let g: Vec<Array2<f64>> = (0..t)
        .map(|_| Array2::from_shape_fn((k, c), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let analytic = crate::arsm::surrogate_gradient(&net, &states, &g)?;
    let fd = finite_difference(
        |p| {
            let n = net.with_params(p).expect("same shape");
            let out = n.forward_batch(states.view()).expect("input fits");
            let logits: Vec<PolicyLogits> = out
                .rows()
                .into_iter()
                .map(|r| PolicyLogits::from_flat(k, c, r.to_vec()).expect("k * c outputs"))
                .collect();
            crate::arsm::surrogate_loss(&g, &logits).expect("aligned")
        },
        &net.params(),
        1e-5,
    )?;
    Ok(relative_error(&analytic, &fd))
}

/// Tolerance for gradient checks.
pub const GRADIENT_REL_TOL: f64 = 1e-4;

/// The standard verification suite.
pub fn run_default_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let estimator = |r: EstimatorReport| (r.pass, r.z_scores(), Vec::new(), r.draws);

    checks.push(with_reruns("arsm_unbiased_k2_c3", cfg.seed, cfg.reruns, |s| {
        arsm_unbiasedness(2, 3, cfg.draws, s).map(estimator)
    })?);
    for c in [2usize, 3, 4] {
        checks.push(with_reruns(&format!("zero_baseline_c{c}"), cfg.seed + c as u64, cfg.reruns, |s| {
            zero_baseline_random(c, cfg.draws, s).map(estimator)
        })?);
    }
    for (i, c) in [2usize, 3, 5, 3, 5].into_iter().enumerate() {
        checks.push(with_reruns(&format!("reparam_law_{i}_c{c}"), cfg.seed + 100 + i as u64, cfg.reruns, |s| {
            reparam_random(c, cfg.sampling_draws, s).map(|r| (r.pass, Vec::new(), r.p_values, r.draws))
        })?);
    }
    checks.push(with_reruns("negative_control_biased", cfg.seed + 200, 0, |s| {
        let mut rng = crate::seeded_rng(s);
        let spec = BanditSpec::random(2, 3, &mut rng)?;
        let logits = random_logits(spec.space, &mut rng);
        let exact = exact_gradient(&spec, &logits)?;
        let draws = (cfg.draws / 10).max(10_000);
        let biased = mc_estimator_mean(|r| arsm_draw(&spec, &logits, r).map(|g| g + 0.1), &exact, draws, &mut rng)?;
        // The harness is sane when the biased estimator is rejected.
        Ok((!biased.pass, biased.z_scores(), Vec::new(), draws))
    })?);
    checks.push(with_reruns("mlp_backward_fd", cfg.seed + 300, 0, |s| {
        let errs = (0..20)
            .map(|i| mlp_gradient_error(&[4, 16, 16, 3], s + i))
            .collect::<Result<Vec<_>>>()?;
        Ok((errs.iter().all(|&e| e < GRADIENT_REL_TOL), Vec::new(), errs, 20))
    })?);
    checks.push(with_reruns("surrogate_gradient_fd", cfg.seed + 400, 0, |s| {
        let errs = (0..20)
            .map(|i| surrogate_gradient_error(4, 2, 3, 5, s + i))
            .collect::<Result<Vec<_>>>()?;
        Ok((errs.iter().all(|&e| e < GRADIENT_REL_TOL), Vec::new(), errs, 20))
    })?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { checks, pass })
}

/// Constant estimator at the exact gradient, for harness sanity.
pub fn identity_report(spec: &BanditSpec, logits: &PolicyLogits, draws: usize, rng: &mut Rng) -> Result<EstimatorReport> {
    let exact = exact_gradient(spec, logits)?;
    mc_estimator_mean(|_| Ok(exact.clone()), &exact, draws, rng)
}
