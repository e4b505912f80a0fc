//! Action-value critic: replay buffer, bootstrapped and Monte-Carlo targets,
//! Bellman regression and soft target networks.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::approx::{Adam, Mlp};
use crate::envs::discretize_action;
use crate::error::{check_len, Error, Result};
use crate::policy::{action_probs, sample_categorical, ActionSpace, ActionVector, PolicyLogits};
use crate::trajectory::stack_rows;
use crate::Rng;

/// One environment step as stored for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: ActionVector,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 100_000;

    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
            inserted: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions, evicted items included.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample of `n` distinct transitions.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if n > self.items.len() {
            return Err(Error::InsufficientBuffer {
                available: self.items.len(),
                required: n,
            });
        }
        Ok(index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

/// Slowly tracking copies of the policy and critic.
#[derive(Debug, Clone)]
pub struct TargetNets {
    pub policy: Mlp,
    pub critic: Mlp,
    pub tau: f64,
}

impl TargetNets {
    pub fn new(policy: &Mlp, critic: &Mlp, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::OutOfRange(format!("tau = {tau}")));
        }
        Ok(Self {
            policy: policy.clone(),
            critic: critic.clone(),
            tau,
        })
    }
}

/// `target <- tau * online + (1 - tau) * target` for both networks.
pub fn soft_update(targets: &mut TargetNets, online_policy: &Mlp, online_critic: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::OutOfRange(format!("tau = {tau}")));
    }
    targets.policy.soft_update_from(online_policy, tau)?;
    targets.critic.soft_update_from(online_critic, tau)
}

/// Critic input: the state followed by the action's grid coordinates.
pub fn critic_input(s: &[f64], a: &ActionVector, c: usize) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend(discretize_action(a, c)?);
    Ok(x)
}

pub fn critic_eval(critic: &Mlp, s: &[f64], a: &ActionVector, c: usize) -> Result<f64> {
    check_len("critic input", critic.input_dim(), s.len() + a.len())?;
    Ok(critic.forward(&critic_input(s, a, c)?)?[0])
}

/// Stacked critic inputs for `(state, action)` pairs.
pub fn critic_inputs<'a>(pairs: impl Iterator<Item = (&'a [f64], &'a ActionVector)>, c: usize) -> Result<Array2<f64>> {
    let rows = pairs.map(|(s, a)| critic_input(s, a, c)).collect::<Result<Vec<_>>>()?;
    Ok(stack_rows(rows.iter().map(Vec::as_slice)))
}

pub fn critic_eval_batch(critic: &Mlp, inputs: &Array2<f64>) -> Result<Vec<f64>> {
    if inputs.nrows() == 0 {
        return Ok(Vec::new());
    }
    check_len("critic input", critic.input_dim(), inputs.ncols())?;
    Ok(critic.forward_batch(inputs.view())?.column(0).to_vec())
}

/// How `E_{a ~ pi'}[Q'(s', a)]` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationConfig {
    /// Enumerate all joint actions when `C^K` is at most this.
    pub enumerate_limit: usize,
    /// Sampled actions per next-state otherwise.
    pub samples: usize,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        Self {
            enumerate_limit: 64,
            samples: 16,
        }
    }
}

/// `y = r + gamma * E_{a ~ pi'(.|s')} Q'(s', a)`, with `y = r` on terminal
/// transitions.
pub fn off_policy_targets(
    batch: &[&Transition],
    targets: &TargetNets,
    space: ActionSpace,
    gamma: f64,
    cfg: &ExpectationConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty transition batch".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!("gamma = {gamma}")));
    }
    let mut y: Vec<f64> = batch.iter().map(|t| t.r).collect();
    if gamma == 0.0 {
        return Ok(y);
    }
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].done).collect();
    if live.is_empty() {
        return Ok(y);
    }
    let next_states = stack_rows(live.iter().map(|&i| batch[i].s_next.as_slice()));
    let logits = targets.policy.forward_batch(next_states.view())?;
    let probs: Vec<ndarray::Array2<f64>> = logits
        .rows()
        .into_iter()
        .map(|row| PolicyLogits::from_flat(space.k, space.c, row.to_vec()).map(|l| action_probs(&l)))
        .collect::<Result<_>>()?;

    let enumerate = space.joint_size() <= cfg.enumerate_limit;
    let (actions_per_state, weights, actions): (usize, Vec<f64>, Vec<ActionVector>) = if enumerate {
        let all = space.enumerate();
        let mut w = Vec::with_capacity(live.len() * all.len());
        let mut acts = Vec::with_capacity(live.len() * all.len());
        for p in &probs {
            for a in &all {
                w.push(a.0.iter().enumerate().map(|(k, &ak)| p[[k, ak]]).product());
                acts.push(a.clone());
            }
        }
        (all.len(), w, acts)
    } else {
        let m = cfg.samples.max(1);
        let mut acts = Vec::with_capacity(live.len() * m);
        for p in &probs {
            for _ in 0..m {
                acts.push(sample_categorical(p, rng));
            }
        }
        (m, vec![1.0 / m as f64; live.len() * m], acts)
    };
    let inputs = critic_inputs(
        live.iter()
            .flat_map(|&i| std::iter::repeat_n(batch[i].s_next.as_slice(), actions_per_state))
            .zip(actions.iter()),
        space.c,
    )?;
    let q = critic_eval_batch(&targets.critic, &inputs)?;
    for (row, &i) in live.iter().enumerate() {
        let span = row * actions_per_state..(row + 1) * actions_per_state;
        let expected: f64 = q[span.clone()].iter().zip(&weights[span]).map(|(q, w)| q * w).sum();
        y[i] += gamma * expected;
    }
    Ok(y)
}

/// Discounted returns `y_t = sum_{t' >= t} gamma^{t'-t} r_t'`.
pub fn on_policy_targets(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut y = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        y[t] = acc;
    }
    y
}

/// Sum of squared residuals and its gradient with respect to the critic parameters.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: &Array2<f64>, targets: &[f64]) -> Result<(f64, crate::ParameterGradient)> {
    check_len("critic targets", inputs.nrows(), targets.len())?;
    let cache = critic.forward_cached(inputs.view())?;
    let out = cache.output();
    let mut loss = 0.0;
    let mut grad = Array2::zeros((inputs.nrows(), 1));
    for (i, &y) in targets.iter().enumerate() {
        let r = out[[i, 0]] - y;
        loss += r * r;
        grad[[i, 0]] = 2.0 * r;
    }
    let g = critic.backward_batch(&cache, grad.view())?;
    Ok((loss, g.params))
}

/// Critic training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub gamma: f64,
    pub n_critic: usize,
    pub expectation: ExpectationConfig,
}

/// Delayed critic update: `n_critic` Adam steps on the Bellman loss mixing
/// `L = T` replayed transitions with the on-policy Monte-Carlo targets.
/// Returns the loss before each step.
#[allow(clippy::too_many_arguments)]
pub fn critic_update(
    critic: &mut Mlp,
    adam: &mut Adam,
    buffer: &ReplayBuffer,
    on_inputs: &Array2<f64>,
    on_targets: &[f64],
    targets: &TargetNets,
    space: ActionSpace,
    cfg: &CriticConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let l = on_targets.len();
    check_len("critic_update on-policy batch", on_inputs.nrows(), l)?;
    if buffer.len() < l {
        return Err(Error::InsufficientBuffer {
            available: buffer.len(),
            required: l,
        });
    }
    let mut losses = Vec::with_capacity(cfg.n_critic);
    for _ in 0..cfg.n_critic {
        let batch = buffer.sample(l, rng)?;
        let y_off = off_policy_targets(&batch, targets, space, cfg.gamma, &cfg.expectation, rng)?;
        let off_inputs = critic_inputs(batch.iter().map(|t| (t.s.as_slice(), &t.a)), space.c)?;
        let inputs = ndarray::concatenate(ndarray::Axis(0), &[off_inputs.view(), on_inputs.view()])
            .map_err(|_| Error::Shape {
                context: "critic_update inputs",
                expected: off_inputs.ncols(),
                actual: on_inputs.ncols(),
            })?;
        let mut y = y_off;
        y.extend_from_slice(on_targets);
        let (loss, grad) = critic_loss_and_grad(critic, &inputs, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss"));
        }
        let next = adam.step(&critic.params(), &grad)?;
        critic.set_params(&next)?;
        losses.push(loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;

    fn transition(i: usize, done: bool) -> Transition {
        Transition {
            s: vec![i as f64, 0.5],
            a: ActionVector(vec![i % 3]),
            r: i as f64 * 0.1,
            s_next: vec![i as f64 + 1.0, -0.5],
            done,
        }
    }

    #[test]
    fn buffer_fifo_eviction() {
        let mut b = ReplayBuffer::new(5).unwrap();
        for i in 0..8 {
            b.push(transition(i, false));
        }
        assert_eq!(b.len(), 5);
        assert_eq!(b.inserted(), 8);
        let firsts: Vec<f64> = b.iter().map(|t| t.s[0]).collect();
        assert_eq!(firsts, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn buffer_sampling_without_replacement() {
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            b.push(transition(i, false));
        }
        let mut rng = crate::seeded_rng(3);
        let s = b.sample(10, &mut rng).unwrap();
        let mut ids: Vec<usize> = s.iter().map(|t| t.s[0] as usize).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert!(matches!(b.sample(11, &mut rng), Err(Error::InsufficientBuffer { .. })));
    }

    #[test]
    fn critic_input_layout() {
        let x = critic_input(&[0.3, -0.2], &ActionVector(vec![0, 10]), 11).unwrap();
        assert_eq!(x, vec![0.3, -0.2, -1.0, 1.0]);
        let zero = Mlp::zeros(&[4, 8, 1]).unwrap();
        assert_eq!(critic_eval(&zero, &[0.3, -0.2], &ActionVector(vec![0, 10]), 11).unwrap(), 0.0);
        assert!(critic_eval(&zero, &[0.3], &ActionVector(vec![0, 10]), 11).is_err());
    }

    #[test]
    fn on_policy_targets_examples() {
        assert_eq!(on_policy_targets(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
        assert_eq!(on_policy_targets(&[3.0, -1.0], 0.0), vec![3.0, -1.0]);
        let mut rng = crate::seeded_rng(8);
        let r: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = on_policy_targets(&r, 0.99);
        for t in 0..50 {
            let naive: f64 = (t..50).map(|u| 0.99f64.powi((u - t) as i32) * r[u]).sum();
            assert!((y[t] - naive).abs() < 1e-10);
            if t + 1 < 50 {
                assert!((y[t] - (r[t] + 0.99 * y[t + 1])).abs() < 1e-12);
            }
        }
    }

    fn nets(k: usize, c: usize, seed: u64) -> TargetNets {
        let policy = Mlp::new(&[2, 8, k * c], seed).unwrap();
        let critic = Mlp::new(&[2 + k, 8, 1], seed + 1).unwrap();
        TargetNets::new(&policy, &critic, 0.01).unwrap()
    }

    #[test]
    fn off_policy_gamma_zero_and_terminal() {
        let t = nets(1, 3, 1);
        let space = ActionSpace { k: 1, c: 3 };
        let items = [transition(1, false), transition(2, true)];
        let batch: Vec<&Transition> = items.iter().collect();
        let mut rng = crate::seeded_rng(0);
        let cfg = ExpectationConfig::default();
        let y = off_policy_targets(&batch, &t, space, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!(y, vec![0.1, 0.2]);
        let y = off_policy_targets(&batch, &t, space, 0.9, &cfg, &mut rng).unwrap();
        assert_eq!(y[1], 0.2);
        assert!(off_policy_targets(&[], &t, space, 0.9, &cfg, &mut rng).is_err());
    }

    #[test]
    fn off_policy_uniform_policy_is_arithmetic_mean() {
        let mut t = nets(2, 3, 4);
        t.policy = Mlp::zeros(&[2, 8, 6]).unwrap();
        let space = ActionSpace { k: 2, c: 3 };
        let tr = Transition {
            s: vec![0.0, 0.0],
            a: ActionVector(vec![0, 1]),
            r: 1.0,
            s_next: vec![0.4, -0.7],
            done: false,
        };
        let mut rng = crate::seeded_rng(0);
        let y = off_policy_targets(&[&tr], &t, space, 0.5, &ExpectationConfig::default(), &mut rng).unwrap();
        let mean: f64 = space
            .enumerate()
            .iter()
            .map(|a| critic_eval(&t.critic, &tr.s_next, a, 3).unwrap())
            .sum::<f64>()
            / 9.0;
        assert!((y[0] - (1.0 + 0.5 * mean)).abs() < 1e-12);
    }

    #[test]
    fn sampled_expectation_matches_enumeration() {
        let t = nets(1, 5, 9);
        let space = ActionSpace { k: 1, c: 5 };
        let tr = transition(0, false);
        let mut rng = crate::seeded_rng(2);
        let exact = off_policy_targets(&[&tr], &t, space, 1.0, &ExpectationConfig::default(), &mut rng).unwrap()[0];
        let sampled_cfg = ExpectationConfig {
            enumerate_limit: 0,
            samples: 10_000,
        };
        // Estimate the per-sample spread from repeated single-sample draws.
        let single = ExpectationConfig {
            enumerate_limit: 0,
            samples: 1,
        };
        let mut m = crate::stats::RunningMoments::new();
        for _ in 0..2000 {
            m.push(off_policy_targets(&[&tr], &t, space, 1.0, &single, &mut rng).unwrap()[0]);
        }
        let se = m.variance().sqrt() / 100.0;
        let approx = off_policy_targets(&[&tr], &t, space, 1.0, &sampled_cfg, &mut rng).unwrap()[0];
        assert!((approx - exact).abs() <= 3.0 * se + 1e-12, "{approx} vs {exact} (se {se})");
    }

    #[test]
    fn critic_loss_matches_hand_sum() {
        let critic = Mlp::new(&[3, 6, 1], 5).unwrap();
        let inputs = ndarray::array![[0.1, 0.2, -1.0], [0.5, -0.3, 1.0], [0.0, 0.0, 0.0]];
        let y = [0.5, -0.25, 1.0];
        let (loss, _) = critic_loss_and_grad(&critic, &inputs, &y).unwrap();
        let hand: f64 = (0..3)
            .map(|i| (critic.forward(&inputs.row(i).to_vec()).unwrap()[0] - y[i]).powi(2))
            .sum();
        assert!((loss - hand).abs() < 1e-8);
    }

    fn setup_update() -> (Mlp, ReplayBuffer, Array2<f64>, Vec<f64>, TargetNets, ActionSpace) {
        let space = ActionSpace { k: 1, c: 3 };
        let mut buffer = ReplayBuffer::new(100).unwrap();
        for i in 0..20 {
            buffer.push(Transition {
                s: vec![0.1 * i as f64, 0.0],
                a: ActionVector(vec![i % 3]),
                r: 1.0,
                s_next: vec![0.1 * i as f64 + 0.1, 0.0],
                done: true,
            });
        }
        let critic = Mlp::new(&[3, 32, 1], 11).unwrap();
        let on: Vec<&Transition> = buffer.iter().take(5).collect();
        let on_inputs = critic_inputs(on.iter().map(|t| (t.s.as_slice(), &t.a)), 3).unwrap();
        let t = TargetNets::new(&Mlp::new(&[2, 8, 3], 1).unwrap(), &critic, 0.01).unwrap();
        (critic, buffer, on_inputs, vec![1.0; 5], t, space)
    }

    #[test]
    fn zero_steps_leave_critic_unchanged() {
        let (mut critic, buffer, on_inputs, on_y, t, space) = setup_update();
        let before = critic.params();
        let mut adam = Adam::new(critic.num_params(), 1e-2).unwrap();
        let cfg = CriticConfig {
            gamma: 0.99,
            n_critic: 0,
            expectation: ExpectationConfig::default(),
        };
        let mut rng = crate::seeded_rng(0);
        let losses = critic_update(&mut critic, &mut adam, &buffer, &on_inputs, &on_y, &t, space, &cfg, &mut rng).unwrap();
        assert!(losses.is_empty());
        assert_eq!(critic.params(), before);
    }

    #[test]
    fn constant_targets_loss_decreases() {
        let (mut critic, buffer, _, _, t, space) = setup_update();
        let mut adam = Adam::new(critic.num_params(), 3e-3).unwrap();
        let cfg = CriticConfig {
            gamma: 0.99,
            n_critic: 200,
            expectation: ExpectationConfig::default(),
        };
        // Every transition is terminal with r = 1, so all targets equal 1 and
        // the replayed batch is a full permutation of the buffer.
        let full_on: Vec<&Transition> = buffer.iter().collect();
        let inputs = critic_inputs(full_on.iter().map(|x| (x.s.as_slice(), &x.a)), 3).unwrap();
        let mut rng = crate::seeded_rng(0);
        let losses = critic_update(&mut critic, &mut adam, &buffer, &inputs, &[1.0; 20], &t, space, &cfg, &mut rng).unwrap();
        let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing as f64 >= 0.9 * (losses.len() - 1) as f64, "{decreasing}");
        assert!(losses.last().unwrap() < &(0.1 * losses[0]));
    }

    #[test]
    fn insufficient_buffer_is_reported() {
        let (mut critic, buffer, _, _, t, space) = setup_update();
        let mut adam = Adam::new(critic.num_params(), 1e-2).unwrap();
        let cfg = CriticConfig {
            gamma: 0.99,
            n_critic: 1,
            expectation: ExpectationConfig::default(),
        };
        let big = Array2::zeros((30, 3));
        let mut rng = crate::seeded_rng(0);
        let err = critic_update(&mut critic, &mut adam, &buffer, &big, &[0.0; 30], &t, space, &cfg, &mut rng);
        assert!(matches!(err, Err(Error::InsufficientBuffer { available: 20, required: 30 })));
    }

    #[test]
    fn soft_update_examples_and_betweenness() {
        let online_p = Mlp::new(&[2, 4, 3], 1).unwrap();
        let online_q = Mlp::new(&[3, 4, 1], 2).unwrap();
        let mut t = TargetNets::new(&Mlp::new(&[2, 4, 3], 3).unwrap(), &Mlp::new(&[3, 4, 1], 4).unwrap(), 0.01).unwrap();
        let before = t.critic.params();
        soft_update(&mut t, &online_p, &online_q, 0.01).unwrap();
        for ((new, old), on) in t.critic.params().iter().zip(before.iter()).zip(online_q.params().iter()) {
            assert!(*new >= old.min(*on) - 1e-15 && *new <= old.max(*on) + 1e-15);
        }
        let mut same = t.clone();
        soft_update(&mut same, &online_p, &online_q, 0.0).unwrap();
        assert_eq!(same.policy.params(), t.policy.params());
        soft_update(&mut same, &online_p, &online_q, 1.0).unwrap();
        assert_eq!(same.policy.params(), online_p.params());
        assert!(soft_update(&mut same, &online_p, &online_q, 1.5).is_err());

        let one = Mlp::from_parts(vec![ndarray::array![[1.0]]], vec![ndarray::array![0.0]]).unwrap();
        let zero = Mlp::zeros(&[1, 1]).unwrap();
        let mut scalar = TargetNets::new(&zero, &zero, 0.01).unwrap();
        soft_update(&mut scalar, &one, &one, 0.01).unwrap();
        assert!((scalar.critic.weights()[0][[0, 0]] - 0.01).abs() < 1e-15);
    }
}
