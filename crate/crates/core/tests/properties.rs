//! Property tests for invariants that span modules.

use carsm::arsm::{f_matrix, g_tensor_step, joint_pseudo_set, pseudo_tables};
use carsm::baselines::{gae, normalize, GaeConfig};
use carsm::critic::{on_policy_targets, ReplayBuffer, Transition};
use carsm::envs::{grid_index, grid_value};
use carsm::policy::{log_prob, sample_dirichlet, select_action, DirichletMatrix};
use carsm::trpo::FisherOperator;
use carsm::verify::{exact_gradient, BanditSpec};
use carsm::{ActionSpace, ActionVector, Mlp, PolicyLogits};
use ndarray::Array2;
use proptest::prelude::*;

fn space_and_seed() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=3, 2usize..=6, any::<u64>())
}

fn draw(k: usize, c: usize, seed: u64) -> (PolicyLogits, DirichletMatrix) {
    let mut rng = carsm::seeded_rng(seed);
    let space = ActionSpace::new(k, c).unwrap();
    let logits = carsm::verify::random_logits(space, &mut rng);
    (PolicyLogits(logits.0 * 3.0), sample_dirichlet(space, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn select_action_ignores_per_dimension_shifts((k, c, seed) in space_and_seed(), shift in -50.0f64..50.0) {
        let (logits, d) = draw(k, c, seed);
        let mut shifted = logits.clone();
        for (i, mut row) in shifted.0.rows_mut().into_iter().enumerate() {
            row += shift * (i as f64 + 1.0);
        }
        prop_assert_eq!(select_action(&logits, &d).unwrap(), select_action(&shifted, &d).unwrap());
    }

    #[test]
    fn swap_tables_are_symmetric_with_true_diagonal((k, c, seed) in space_and_seed()) {
        let (logits, d) = draw(k, c, seed);
        let a = select_action(&logits, &d).unwrap();
        for (kk, table) in pseudo_tables(&logits, &d).unwrap().iter().enumerate() {
            for i in 0..c {
                prop_assert_eq!(table.get(i, i), a.0[kk]);
                for j in 0..c {
                    prop_assert_eq!(table.get(i, j), table.get(j, i));
                }
            }
        }
    }

    #[test]
    fn joint_set_excludes_true_action_and_is_bounded((k, c, seed) in space_and_seed()) {
        let (logits, d) = draw(k, c, seed);
        let a = select_action(&logits, &d).unwrap();
        let set = joint_pseudo_set(&pseudo_tables(&logits, &d).unwrap(), &a).unwrap();
        prop_assert!(set.len() <= c * (c - 1) / 2);
        prop_assert!(!set.actions().contains(&a));
    }

    #[test]
    fn g_is_centered_and_zero_on_inert_dimensions((k, c, seed) in space_and_seed(), y in -10.0f64..10.0) {
        let (logits, d) = draw(k, c, seed);
        let a = select_action(&logits, &d).unwrap();
        let tables = pseudo_tables(&logits, &d).unwrap();
        let set = joint_pseudo_set(&tables, &a).unwrap();
        let mut rng = carsm::seeded_rng(seed ^ 1);
        let f = f_matrix(
            &set,
            |acts| Ok(acts.iter().map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect()),
            y,
        )
        .unwrap();
        for i in 0..c {
            for j in 0..c {
                prop_assert_eq!(f.0[[i, j]], f.0[[j, i]]);
            }
        }
        let g = g_tensor_step(&f, &d, &tables).unwrap();
        for (row, table) in g.rows().into_iter().zip(&tables) {
            prop_assert!(row.sum().abs() < 1e-8);
            if table.is_inert() {
                prop_assert!(row.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn log_prob_factorizes((k, c, seed) in space_and_seed()) {
        let (logits, d) = draw(k, c, seed);
        let a = select_action(&logits, &d).unwrap();
        let total: f64 = (0..k)
            .map(|kk| {
                let row = PolicyLogits(logits.0.slice(ndarray::s![kk..kk + 1, ..]).to_owned());
                log_prob(&row, &ActionVector(vec![a.0[kk]])).unwrap()
            })
            .sum();
        prop_assert!((log_prob(&logits, &a).unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn exact_gradient_rows_sum_to_zero((k, c, seed) in (1usize..=2, 2usize..=4, any::<u64>())) {
        let mut rng = carsm::seeded_rng(seed);
        let spec = BanditSpec::random(k, c, &mut rng).unwrap();
        let logits = carsm::verify::random_logits(spec.space, &mut rng);
        let g = exact_gradient(&spec, &logits).unwrap();
        for row in g.rows() {
            prop_assert!(row.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn on_policy_targets_follow_bellman(rewards in prop::collection::vec(-5.0f64..5.0, 1..40), gamma in 0.0f64..=1.0) {
        let y = on_policy_targets(&rewards, gamma);
        prop_assert_eq!(y.len(), rewards.len());
        prop_assert_eq!(*y.last().unwrap(), *rewards.last().unwrap());
        for t in 0..rewards.len() - 1 {
            prop_assert!((y[t] - (rewards[t] + gamma * y[t + 1])).abs() < 1e-12 * (1.0 + y[t].abs()));
        }
    }

    #[test]
    fn gae_at_lambda_one_is_return_minus_value(
        rv in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
        tail in -5.0f64..5.0,
        gamma in 0.5f64..=1.0,
    ) {
        let rewards: Vec<f64> = rv.iter().map(|p| p.0).collect();
        let mut values: Vec<f64> = rv.iter().map(|p| p.1).collect();
        values.push(tail);
        let dones = vec![false; rewards.len()];
        let cfg = GaeConfig { gamma, lambda: 1.0, normalize: false };
        let adv = gae(&rewards, &values, &dones, &cfg).unwrap();
        let mut ret = tail;
        for t in (0..rewards.len()).rev() {
            ret = rewards[t] + gamma * ret;
            prop_assert!((adv[t] - (ret - values[t])).abs() < 1e-9 * (1.0 + ret.abs()));
        }
    }

    #[test]
    fn normalized_advantages_are_standard(x in prop::collection::vec(-100.0f64..100.0, 2..60)) {
        let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let mut v = x.clone();
        normalize(&mut v);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn soft_update_stays_between(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let online = Mlp::new(&[3, 5, 2], seed).unwrap();
        let mut target = Mlp::new(&[3, 5, 2], seed.wrapping_add(1)).unwrap();
        let before = target.params();
        target.soft_update_from(&online, tau).unwrap();
        for ((new, old), on) in target.params().iter().zip(before.iter()).zip(online.params().iter()) {
            prop_assert!(*new >= old.min(*on) - 1e-15 && *new <= old.max(*on) + 1e-15);
        }
    }

    #[test]
    fn replay_buffer_keeps_the_newest(capacity in 1usize..20, extra in 0usize..30) {
        let mut buf = ReplayBuffer::new(capacity).unwrap();
        let total = capacity + extra;
        for i in 0..total {
            buf.push(Transition { s: vec![i as f64], a: ActionVector(vec![0]), r: 0.0, s_next: vec![], done: false });
        }
        prop_assert_eq!(buf.len(), capacity);
        let kept: Vec<f64> = buf.iter().map(|t| t.s[0]).collect();
        let expected: Vec<f64> = (extra..total).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn grid_round_trips(c in 2usize..2000, frac in 0.0f64..1.0) {
        let i = ((c - 1) as f64 * frac) as usize;
        let v = grid_value(i, c);
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(grid_index(v, c), i);
    }

    #[test]
    fn fisher_operator_is_symmetric(seed in any::<u64>()) {
        let mut rng = carsm::seeded_rng(seed);
        let policy = Mlp::with_rng(&[3, 6, 4], &mut rng).unwrap();
        let states = Array2::from_shape_fn((5, 3), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let space = ActionSpace::new(2, 2).unwrap();
        let h = FisherOperator::new(&policy, &states, space, 0.0).unwrap();
        let n = policy.num_params();
        let u: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let uhv = h.apply(&v).unwrap().dot(&u);
        let vhu = h.apply(&u).unwrap().dot(&v);
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((uhv - vhu).abs() <= 1e-6 * norm(&u) * norm(&v));
    }
}
