//! Augment-REINFORCE-swap-merge machinery for factorized categorical policies.
//!
//! For each timestep and action dimension the Dirichlet draw `pi_k` is swapped
//! coordinate-pairwise; each swap `(c, j)` yields a pseudo-action
//! `argmin_i (ln pi_ki^{c<->j} - phi_ki)`. Applying the same swap in every
//! dimension gives a joint pseudo-action whose value fills `F(c, j)`, and the
//! coefficients
//!
//! ```text
//! g_kc = sum_j (F(c, j) - mean_m F(m, j)) (1/C - pi_kj)
//! ```
//!
//! are unbiased for `d E[Q] / d phi_kc`. Dimensions whose swaps never change
//! the action contribute exactly zero.

use indexmap::IndexSet;
use ndarray::{Array2, ArrayView1};

use crate::approx::{Mlp, ParameterGradient};
use crate::envs::Environment;
use crate::error::{check_len, Error, Result};
use crate::policy::{
    entropy_grad, sample_dirichlet, select_action, ActionSpace, ActionVector, DirichletMatrix,
    PolicyLogits,
};
use crate::trajectory::Trajectory;
use crate::Rng;

/// Swap table for one action dimension: entry `(c, j)` is the action selected
/// after swapping Dirichlet coordinates `c` and `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoActionTable {
    c: usize,
    true_action: usize,
    entries: Vec<usize>,
}

impl PseudoActionTable {
    pub fn num_choices(&self) -> usize {
        self.c
    }

    pub fn true_action(&self) -> usize {
        self.true_action
    }

    pub fn get(&self, c: usize, j: usize) -> usize {
        self.entries[c * self.c + j]
    }

    /// True when no swap changes the action: the dimension is shut down.
    pub fn is_inert(&self) -> bool {
        self.entries.iter().all(|&a| a == self.true_action)
    }
}

/// Index and score of the three smallest scores, ordered by `(score, index)`.
fn three_smallest(scores: &[f64]) -> [(usize, f64); 3] {
    let mut best = [(usize::MAX, f64::INFINITY); 3];
    for (i, &s) in scores.iter().enumerate() {
        // Strict comparison keeps the lower index first among equal scores.
        if s < best[0].1 {
            best = [(i, s), best[0], best[1]];
        } else if s < best[1].1 {
            best = [best[0], (i, s), best[1]];
        } else if s < best[2].1 {
            best[2] = (i, s);
        }
    }
    best
}

fn lex_less(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// Builds the `C x C` swap table of one dimension in `O(C^2)`.
///
/// After swapping `c` and `j` only those two scores change, so the argmin is
/// the best of the two swapped entries and the smallest untouched score,
/// which is among the three smallest overall.
pub fn pseudo_table(logits_k: ArrayView1<f64>, dirichlet_k: ArrayView1<f64>) -> PseudoActionTable {
    let c = logits_k.len();
    let log_pi: Vec<f64> = dirichlet_k.iter().map(|p| p.ln()).collect();
    let scores: Vec<f64> = log_pi.iter().zip(logits_k.iter()).map(|(l, f)| l - f).collect();
    let top = three_smallest(&scores);
    let true_action = top[0].0;
    let mut entries = vec![true_action; c * c];
    for ci in 1..c {
        for j in 0..ci {
            let rest = top
                .iter()
                .copied()
                .find(|&(i, _)| i != ci && i != j)
                .unwrap_or((usize::MAX, f64::INFINITY));
            let swapped_c = (ci, log_pi[j] - logits_k[ci]);
            let swapped_j = (j, log_pi[ci] - logits_k[j]);
            let mut best = rest;
            for cand in [swapped_j, swapped_c] {
                if lex_less(cand, best) {
                    best = cand;
                }
            }
            entries[ci * c + j] = best.0;
            entries[j * c + ci] = best.0;
        }
    }
    PseudoActionTable {
        c,
        true_action,
        entries,
    }
}

/// Swap tables for every dimension of one timestep.
pub fn pseudo_tables(logits: &PolicyLogits, dirichlet: &DirichletMatrix) -> Result<Vec<PseudoActionTable>> {
    if logits.space() != dirichlet.space() {
        return Err(Error::Shape {
            context: "pseudo_tables",
            expected: logits.0.len(),
            actual: dirichlet.0.len(),
        });
    }
    Ok(logits
        .0
        .rows()
        .into_iter()
        .zip(dirichlet.0.rows())
        .map(|(phi, pi)| pseudo_table(phi, pi))
        .collect())
}

/// Unique joint pseudo-actions that differ from the true action, and the map
/// from swap pairs to them.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPseudoSet {
    c: usize,
    actions: Vec<ActionVector>,
    /// `C x C`, symmetric; `None` where the joint pseudo-action is the true action.
    pair_index: Vec<Option<usize>>,
}

impl JointPseudoSet {
    pub fn actions(&self) -> &[ActionVector] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn index(&self, c: usize, j: usize) -> Option<usize> {
        self.pair_index[c * self.c + j]
    }
}

pub fn joint_pseudo_set(tables: &[PseudoActionTable], true_action: &ActionVector) -> Result<JointPseudoSet> {
    check_len("joint_pseudo_set dimensions", tables.len(), true_action.len())?;
    let c = tables.first().map_or(1, |t| t.c);
    if tables.iter().any(|t| t.c != c) {
        return Err(Error::InvalidConfig("swap tables with different C".into()));
    }
    let mut unique: IndexSet<ActionVector> = IndexSet::new();
    let mut pair_index = vec![None; c * c];
    for ci in 1..c {
        for j in 0..ci {
            if tables.iter().zip(&true_action.0).all(|(t, &a)| t.get(ci, j) == a) {
                continue;
            }
            let joint = ActionVector(tables.iter().map(|t| t.get(ci, j)).collect());
            let (idx, _) = unique.insert_full(joint);
            pair_index[ci * c + j] = Some(idx);
            pair_index[j * c + ci] = Some(idx);
        }
    }
    Ok(JointPseudoSet {
        c,
        actions: unique.into_iter().collect(),
        pair_index,
    })
}

/// `C x C` action values of every swap pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FMatrix(pub Array2<f64>);

/// Fills `F` with `y_t` and overwrites pseudo-action cells with one batched
/// evaluation of the unique pseudo-actions.
pub fn f_matrix(
    set: &JointPseudoSet,
    critic_eval: impl FnOnce(&[ActionVector]) -> Result<Vec<f64>>,
    y_t: f64,
) -> Result<FMatrix> {
    let c = set.c;
    let mut f = Array2::from_elem((c, c), y_t);
    if set.is_empty() {
        return Ok(FMatrix(f));
    }
    let values = critic_eval(&set.actions)?;
    check_len("critic evaluations", set.len(), values.len())?;
    for ci in 0..c {
        for j in 0..c {
            if let Some(idx) = set.index(ci, j) {
                f[[ci, j]] = values[idx];
            }
        }
    }
    Ok(FMatrix(f))
}

/// `K x C` coefficients of one timestep; inert dimensions are exactly zero.
pub fn g_tensor_step(
    f: &FMatrix,
    dirichlet: &DirichletMatrix,
    tables: &[PseudoActionTable],
) -> Result<Array2<f64>> {
    let ActionSpace { k, c } = dirichlet.space();
    check_len("g_tensor_step tables", k, tables.len())?;
    check_len("g_tensor_step F", c, f.0.nrows())?;
    check_len("g_tensor_step F", c, f.0.ncols())?;
    // Center each column of F over its first (swap) index.
    let mut centered = f.0.clone();
    for mut col in centered.columns_mut() {
        let mean = col.sum() / c as f64;
        col.mapv_inplace(|v| v - mean);
    }
    let inv_c = 1.0 / c as f64;
    let mut g = Array2::zeros((k, c));
    for (kk, table) in tables.iter().enumerate() {
        if table.is_inert() {
            continue;
        }
        let weights: Vec<f64> = dirichlet.0.row(kk).iter().map(|p| inv_c - p).collect();
        for ci in 0..c {
            g[[kk, ci]] = centered
                .row(ci)
                .iter()
                .zip(&weights)
                .map(|(d, w)| d * w)
                .sum();
        }
    }
    Ok(g)
}

/// Per-timestep coefficients `g_t` (each `K x C`).
pub type GTensor = Vec<Array2<f64>>;

/// `J = 1/(TKC) sum_{t,k,c} g_tkc phi_tkc` with `g` held constant.
pub fn surrogate_loss(g: &[Array2<f64>], logits_seq: &[PolicyLogits]) -> Result<f64> {
    check_len("surrogate_loss timesteps", g.len(), logits_seq.len())?;
    if g.is_empty() {
        return Ok(0.0);
    }
    let (k, c) = g[0].dim();
    let norm = (g.len() * k * c) as f64;
    let mut total = 0.0;
    for (gt, phi) in g.iter().zip(logits_seq) {
        check_len("surrogate_loss block", gt.len(), phi.0.len())?;
        total += gt.iter().zip(phi.0.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total / norm)
}

/// Gradient with respect to the policy parameters of
/// `sum_t <coef_t, phi_t(theta)>`, where `coef_t` is `K x C` per state row.
pub fn logit_pullback(policy: &Mlp, states: &Array2<f64>, coefs: &[Array2<f64>]) -> Result<ParameterGradient> {
    check_len("logit_pullback states", coefs.len(), states.nrows())?;
    if coefs.is_empty() {
        return Ok(ParameterGradient::zeros(policy.num_params()));
    }
    let cache = policy.forward_cached(states.view())?;
    let width = policy.output_dim();
    let mut out_grad = Array2::zeros((coefs.len(), width));
    for (t, coef) in coefs.iter().enumerate() {
        check_len("logit_pullback coefficient block", width, coef.len())?;
        for (dst, src) in out_grad.row_mut(t).iter_mut().zip(coef.iter()) {
            *dst = *src;
        }
    }
    Ok(policy.backward_batch(&cache, out_grad.view())?.params)
}

/// Parameter gradient of [`surrogate_loss`] through the policy network.
pub fn surrogate_gradient(policy: &Mlp, states: &Array2<f64>, g: &[Array2<f64>]) -> Result<ParameterGradient> {
    if g.is_empty() {
        return Ok(ParameterGradient::zeros(policy.num_params()));
    }
    let norm = (g.len() * g[0].len()) as f64;
    let scaled: Vec<Array2<f64>> = g.iter().map(|gt| gt / norm).collect();
    logit_pullback(policy, states, &scaled)
}

/// Output of a swap-merge gradient computation.
#[derive(Debug, Clone)]
pub struct ArsmEstimate {
    /// Ascent direction for the policy parameters.
    pub gradient: ParameterGradient,
    pub g: GTensor,
    /// Number of (timestep, dimension) blocks that were not shut down.
    pub active_blocks: usize,
    /// Unique pseudo-actions evaluated, summed over timesteps.
    pub pseudo_actions: usize,
}

/// Coefficients for one timestep from a critic.
pub fn carsm_step_coefficients(
    logits: &PolicyLogits,
    dirichlet: &DirichletMatrix,
    action: &ActionVector,
    y_t: f64,
    critic_eval: impl FnOnce(&[ActionVector]) -> Result<Vec<f64>>,
) -> Result<(Array2<f64>, usize, usize)> {
    let tables = pseudo_tables(logits, dirichlet)?;
    let set = joint_pseudo_set(&tables, action)?;
    let f = f_matrix(&set, critic_eval, y_t)?;
    let g = g_tensor_step(&f, dirichlet, &tables)?;
    let active = tables.iter().filter(|t| !t.is_inert()).count();
    Ok((g, active, set.len()))
}

fn entropy_term(policy: &Mlp, states: &Array2<f64>, logits: &[PolicyLogits], coef: f64) -> Result<Option<ParameterGradient>> {
    if coef == 0.0 || logits.is_empty() {
        return Ok(None);
    }
    let t = logits.len() as f64;
    let grads: Vec<Array2<f64>> = logits.iter().map(|l| entropy_grad(l) * (coef / t)).collect();
    logit_pullback(policy, states, &grads).map(Some)
}

/// Critic-based swap-merge gradient: ascent direction of
/// `J_surrogate + entropy_coef * mean_t H(pi(.|s_t))`.
///
/// `returns[t]` fills the true-action cells of each `F`. `critic_batch`
/// receives every `(timestep, pseudo-action)` pair of the trajectory at once
/// and returns `Q(s_t, a)` for each, in order.
pub fn carsm_gradient(
    trajectory: &Trajectory,
    returns: &[f64],
    policy: &Mlp,
    critic_batch: impl FnOnce(&[(usize, ActionVector)]) -> Result<Vec<f64>>,
    entropy_coef: f64,
) -> Result<ArsmEstimate> {
    check_len("carsm_gradient returns", trajectory.len(), returns.len())?;
    let mut tables = Vec::with_capacity(trajectory.len());
    let mut sets = Vec::with_capacity(trajectory.len());
    let mut requests = Vec::new();
    for (t, step) in trajectory.steps.iter().enumerate() {
        let dirichlet = step.dirichlet.as_ref().ok_or(Error::MissingDirichlet(t))?;
        let tb = pseudo_tables(&step.logits, dirichlet)?;
        let set = joint_pseudo_set(&tb, &step.action)?;
        requests.extend(set.actions().iter().map(|a| (t, a.clone())));
        tables.push(tb);
        sets.push(set);
    }
    let values = if requests.is_empty() {
        Vec::new()
    } else {
        critic_batch(&requests)?
    };
    check_len("critic evaluations", requests.len(), values.len())?;

    let mut g = Vec::with_capacity(trajectory.len());
    let mut active_blocks = 0;
    let mut offset = 0;
    for (t, step) in trajectory.steps.iter().enumerate() {
        let n = sets[t].len();
        let slice = &values[offset..offset + n];
        offset += n;
        let f = f_matrix(&sets[t], |_| Ok(slice.to_vec()), returns[t])?;
        let dirichlet = step.dirichlet.as_ref().expect("checked above");
        g.push(g_tensor_step(&f, dirichlet, &tables[t])?);
        active_blocks += tables[t].iter().filter(|tb| !tb.is_inert()).count();
    }
    let states = trajectory.state_matrix();
    let mut gradient = surrogate_gradient(policy, &states, &g)?;
    let logits: Vec<PolicyLogits> = trajectory.steps.iter().map(|s| s.logits.clone()).collect();
    if let Some(h) = entropy_term(policy, &states, &logits, entropy_coef)? {
        gradient.axpy(1.0, &h)?;
    }
    Ok(ArsmEstimate {
        gradient,
        g,
        active_blocks,
        pseudo_actions: requests.len(),
    })
}

/// Outcome of a Monte-Carlo swap-merge gradient.
#[derive(Debug, Clone)]
pub struct ArsmMcEstimate {
    pub estimate: ArsmEstimate,
    /// Pseudo-action rollouts performed for this update.
    pub rollouts: usize,
    /// Environment steps consumed by those rollouts.
    pub rollout_steps: usize,
    /// Timesteps skipped because the rollout budget was exhausted.
    pub dropped_timesteps: usize,
}

/// Rollout settings for [`arsm_mc_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    /// Maximum pseudo-action rollouts per update.
    pub budget: usize,
    /// Maximum environment steps per rollout, the pseudo-action included.
    pub horizon: usize,
    pub gamma: f64,
}

/// Discounted return of taking `first` from the restored snapshot and then
/// following `policy` to termination or `horizon` steps.
fn rollout_return(
    env: &mut dyn Environment,
    snapshot: &crate::envs::EnvState,
    first: &ActionVector,
    policy: &Mlp,
    cfg: &RolloutConfig,
    rng: &mut Rng,
) -> Result<(f64, usize)> {
    env.restore(snapshot)?;
    let space = env.action_space();
    let mut r = env.step(first)?;
    let mut total = r.reward;
    let mut discount = cfg.gamma;
    let mut steps = 1;
    while !r.done && steps < cfg.horizon {
        let phi = PolicyLogits::from_flat(space.k, space.c, policy.forward(&r.next_state)?)?;
        let d = sample_dirichlet(space, rng);
        let a = select_action(&phi, &d)?;
        r = env.step(&a)?;
        total += discount * r.reward;
        discount *= cfg.gamma;
        steps += 1;
    }
    Ok((total, steps))
}

/// Swap-merge gradient with pseudo-action values estimated by rollouts from
/// environment snapshots.
///
/// Rollouts are allocated from the last timestep backwards; once a timestep's
/// pseudo-actions no longer fit in the budget, it and every earlier timestep
/// with pseudo-actions get zero coefficients.
pub fn arsm_mc_gradient(
    trajectory: &Trajectory,
    returns: &[f64],
    env: &mut dyn Environment,
    policy: &Mlp,
    entropy_coef: f64,
    cfg: &RolloutConfig,
    rng: &mut Rng,
) -> Result<ArsmMcEstimate> {
    check_len("arsm_mc_gradient returns", trajectory.len(), returns.len())?;
    if trajectory.snapshots.len() != trajectory.len() {
        return Err(Error::NoSnapshot);
    }
    let n = trajectory.len();
    let mut tables = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for (t, step) in trajectory.steps.iter().enumerate() {
        let dirichlet = step.dirichlet.as_ref().ok_or(Error::MissingDirichlet(t))?;
        let tb = pseudo_tables(&step.logits, dirichlet)?;
        sets.push(joint_pseudo_set(&tb, &step.action)?);
        tables.push(tb);
    }

    let mut remaining = cfg.budget;
    let mut funded = vec![false; n];
    let mut dropped = 0;
    let mut exhausted = false;
    for t in (0..n).rev() {
        let need = sets[t].len();
        if need == 0 {
            continue;
        }
        if !exhausted && need <= remaining {
            remaining -= need;
            funded[t] = true;
        } else {
            exhausted = true;
            dropped += 1;
        }
    }

    let space = trajectory
        .steps
        .first()
        .map(|s| s.logits.space())
        .unwrap_or(ActionSpace { k: 1, c: 1 });
    let mut g = Vec::with_capacity(n);
    let mut rollouts = 0;
    let mut rollout_steps = 0;
    let mut active_blocks = 0;
    let mut pseudo_actions = 0;
    for t in 0..n {
        let step = &trajectory.steps[t];
        if sets[t].is_empty() || !funded[t] {
            g.push(Array2::zeros((space.k, space.c)));
            continue;
        }
        let snapshot = &trajectory.snapshots[t];
        let f = f_matrix(
            &sets[t],
            |acts| {
                acts.iter()
                    .map(|a| {
                        let (ret, steps) = rollout_return(env, snapshot, a, policy, cfg, rng)?;
                        rollouts += 1;
                        rollout_steps += steps;
                        Ok(ret)
                    })
                    .collect()
            },
            returns[t],
        )?;
        let dirichlet = step.dirichlet.as_ref().expect("checked above");
        g.push(g_tensor_step(&f, dirichlet, &tables[t])?);
        active_blocks += tables[t].iter().filter(|tb| !tb.is_inert()).count();
        pseudo_actions += sets[t].len();
    }

    let states = trajectory.state_matrix();
    let mut gradient = if n == 0 {
        ParameterGradient::zeros(policy.num_params())
    } else {
        surrogate_gradient(policy, &states, &g)?
    };
    let logits: Vec<PolicyLogits> = trajectory.steps.iter().map(|s| s.logits.clone()).collect();
    if let Some(h) = entropy_term(policy, &states, &logits, entropy_coef)? {
        gradient.axpy(1.0, &h)?;
    }
    Ok(ArsmMcEstimate {
        estimate: ArsmEstimate {
            gradient,
            g,
            active_blocks,
            pseudo_actions,
        },
        rollouts,
        rollout_steps,
        dropped_timesteps: dropped,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng as _;

    use super::*;
    use crate::policy::sample_dirichlet;

    /// Materializes the swapped Dirichlet vector and takes the argmin directly.
    fn naive_table(phi: &[f64], pi: &[f64]) -> Vec<usize> {
        let c = phi.len();
        let mut out = vec![0; c * c];
        for ci in 0..c {
            for j in 0..c {
                let mut swapped = pi.to_vec();
                swapped.swap(ci, j);
                let mut best = 0;
                let mut best_v = f64::INFINITY;
                for i in 0..c {
                    let v = swapped[i] * (-phi[i]).exp();
                    if v < best_v {
                        best_v = v;
                        best = i;
                    }
                }
                out[ci * c + j] = best;
            }
        }
        out
    }

    /// Direct double loop over the defining sums.
    fn naive_g(f: &Array2<f64>, pi: &[f64]) -> Vec<f64> {
        let c = pi.len();
        (0..c)
            .map(|ci| {
                let mut acc = 0.0;
                for j in 0..c {
                    let mut mean = 0.0;
                    for m in 0..c {
                        mean += f[[m, j]];
                    }
                    mean /= c as f64;
                    acc += (f[[ci, j]] - mean) * (1.0 / c as f64 - pi[j]);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn forced_two_choice_table() {
        let t = pseudo_table(array![0.0, 0.0].view(), array![0.2, 0.8].view());
        assert_eq!(t.true_action(), 0);
        assert_eq!(t.get(0, 0), 0);
        assert_eq!(t.get(1, 0), 1);
        assert_eq!(t.get(0, 1), 1);
        assert!(!t.is_inert());
    }

    #[test]
    fn table_matches_naive_swap() {
        let mut rng = crate::seeded_rng(17);
        for c in [2usize, 3, 4, 7] {
            for _ in 0..500 {
                let phi: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
                let d = sample_dirichlet(ActionSpace { k: 1, c }, &mut rng);
                let pi: Vec<f64> = d.0.row(0).to_vec();
                let t = pseudo_table(ndarray::ArrayView1::from(&phi), d.0.row(0));
                assert_eq!(t.entries, naive_table(&phi, &pi));
                for i in 0..c {
                    assert_eq!(t.get(i, i), t.true_action());
                }
            }
        }
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        let t = pseudo_table(array![0.0, 0.0, 0.0].view(), array![0.25, 0.25, 0.5].view());
        assert_eq!(t.true_action(), 0);
        assert_eq!(t.entries, naive_table(&[0.0, 0.0, 0.0], &[0.25, 0.25, 0.5]));
    }

    #[test]
    fn joint_set_empty_when_all_inert() {
        let phi = array![[50.0, 0.0, 0.0]];
        let pi = DirichletMatrix(array![[0.4, 0.3, 0.3]]);
        let tables = pseudo_tables(&PolicyLogits(phi), &pi).unwrap();
        assert!(tables[0].is_inert());
        let set = joint_pseudo_set(&tables, &ActionVector(vec![0])).unwrap();
        assert!(set.is_empty());
        let f = f_matrix(&set, |_| panic!("critic must not be called"), 3.5).unwrap();
        assert!(f.0.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn joint_set_deduplicates() {
        // Off-diagonal entries {true, x, x}: one unique pseudo-action.
        let table = PseudoActionTable {
            c: 3,
            true_action: 0,
            entries: vec![0, 0, 2, 0, 0, 2, 2, 2, 0],
        };
        let set = joint_pseudo_set(&[table], &ActionVector(vec![0])).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.actions()[0], ActionVector(vec![2]));
        assert_eq!(set.index(1, 0), None);
        assert_eq!(set.index(2, 0), Some(0));
        assert_eq!(set.index(1, 2), Some(0));
    }

    #[test]
    fn joint_set_size_bound_randomized() {
        let mut rng = crate::seeded_rng(99);
        let space = ActionSpace { k: 3, c: 5 };
        let mut max_seen = 0;
        for _ in 0..10_000 {
            let phi: Vec<f64> = (0..15).map(|_| rng.random_range(-1.5..1.5)).collect();
            let logits = PolicyLogits::from_flat(3, 5, phi).unwrap();
            let d = sample_dirichlet(space, &mut rng);
            let a = select_action(&logits, &d).unwrap();
            let tables = pseudo_tables(&logits, &d).unwrap();
            let set = joint_pseudo_set(&tables, &a).unwrap();
            // One candidate per unordered swap pair.
            assert!(set.len() <= 10);
            max_seen = max_seen.max(set.len());
        }
        assert!(max_seen > 0);
    }

    #[test]
    fn constant_f_gives_zero_g() {
        let d = DirichletMatrix(array![[0.1, 0.6, 0.3], [0.5, 0.2, 0.3]]);
        let logits = PolicyLogits(array![[0.0, 0.1, 0.2], [0.3, -0.2, 0.0]]);
        let tables = pseudo_tables(&logits, &d).unwrap();
        let g = g_tensor_step(&FMatrix(Array2::from_elem((3, 3), 4.2)), &d, &tables).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_choice_hand_instance() {
        let (y, q) = (1.5, -0.5);
        let f = array![[y, q], [q, y]];
        let d = DirichletMatrix(array![[0.3, 0.7]]);
        let logits = PolicyLogits(array![[0.0, 0.0]]);
        let tables = pseudo_tables(&logits, &d).unwrap();
        assert!(!tables[0].is_inert());
        let g = g_tensor_step(&FMatrix(f.clone()), &d, &tables).unwrap();
        let expected = naive_g(&f, &[0.3, 0.7]);
        for c in 0..2 {
            assert!((g[[0, c]] - expected[c]).abs() < 1e-12);
        }
        // Closed form: g_1 = (y - q)/2 * ((1/2 - 0.3) - (1/2 - 0.7)) = (y - q) * 0.2.
        assert!((g[[0, 0]] - (y - q) * 0.2).abs() < 1e-12);
    }

    #[test]
    fn surrogate_loss_small_cases() {
        let g = vec![array![[1.0]]];
        let phi = vec![PolicyLogits(array![[2.0]])];
        assert_eq!(surrogate_loss(&g, &phi).unwrap(), 2.0);
        let zero = vec![Array2::zeros((2, 3)); 4];
        let phis = vec![PolicyLogits(Array2::from_elem((2, 3), 1.3)); 4];
        assert_eq!(surrogate_loss(&zero, &phis).unwrap(), 0.0);
        assert!(surrogate_loss(&zero, &phis[..2]).is_err());
    }

    proptest! {
        #[test]
        fn tables_symmetric_and_g_centered(
            phi in proptest::collection::vec(-3.0f64..3.0, 8),
            q in proptest::collection::vec(-5.0f64..5.0, 16),
            seed in 0u64..10_000,
        ) {
            let logits = PolicyLogits::from_flat(2, 4, phi).unwrap();
            let mut rng = crate::seeded_rng(seed);
            let d = sample_dirichlet(logits.space(), &mut rng);
            let a = select_action(&logits, &d).unwrap();
            let tables = pseudo_tables(&logits, &d).unwrap();
            for t in &tables {
                for c in 0..4 {
                    for j in 0..4 {
                        prop_assert_eq!(t.get(c, j), t.get(j, c));
                    }
                }
            }
            let set = joint_pseudo_set(&tables, &a).unwrap();
            prop_assert!(set.len() <= 6);
            prop_assert!(!set.actions().contains(&a));
            let space = ActionSpace { k: 2, c: 4 };
            let f = f_matrix(&set, |acts| Ok(acts.iter().map(|x| q[space.encode(x)]).collect()), q[space.encode(&a)]).unwrap();
            for c in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(f.0[[c, j]], f.0[[j, c]]);
                }
            }
            let g = g_tensor_step(&f, &d, &tables).unwrap();
            for k in 0..2 {
                prop_assert!(g.row(k).sum().abs() < 1e-8);
                if tables[k].is_inert() {
                    prop_assert!(g.row(k).iter().all(|&v| v == 0.0));
                }
            }
        }
    }
}
