use std::hint::black_box;

use carsm::arsm::{carsm_gradient, pseudo_table};
use carsm::critic::{critic_eval_batch, critic_inputs};
use carsm::policy::sample_dirichlet;
use carsm::{ActionSpace, Mlp};
use carsm_bench::episode_fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{Array1, Array2};
use rand::Rng;

fn bench_pseudo_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("pseudo_table");
    for choices in [2usize, 21, 101, 1001] {
        let mut rng = carsm::seeded_rng(1);
        let logits = Array1::from_shape_fn(choices, |_| rng.random_range(-1.0..1.0));
        let space = ActionSpace::new(1, choices).unwrap();
        let dirichlet = sample_dirichlet(space, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(choices), &choices, |b, _| {
            b.iter(|| pseudo_table(black_box(logits.view()), black_box(dirichlet.0.row(0))))
        });
    }
    group.finish();
}

fn bench_carsm_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("carsm_gradient");
    group.sample_size(20);
    for choices in [11usize, 101] {
        let f = episode_fixture(choices, 7).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(choices), &f, |b, f| {
            b.iter(|| {
                carsm_gradient(
                    &f.trajectory,
                    &f.returns,
                    &f.policy,
                    |pairs| {
                        let inputs = critic_inputs(
                            pairs.iter().map(|(t, a)| (f.trajectory.steps[*t].state.as_slice(), a)),
                            f.c,
                        )?;
                        critic_eval_batch(&f.critic, &inputs)
                    },
                    0.01,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_mlp(c: &mut Criterion) {
    let net = Mlp::new(&[5, 64, 64, 1], 3).unwrap();
    let mut rng = carsm::seeded_rng(4);
    let mut group = c.benchmark_group("mlp");
    for rows in [1usize, 200, 3200] {
        let x = Array2::from_shape_fn((rows, 5), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_elem((rows, 1), 1.0);
        group.bench_with_input(BenchmarkId::new("forward", rows), &x, |b, x| {
            b.iter(|| net.forward_batch(black_box(x.view())).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", rows), &x, |b, x| {
            b.iter(|| {
                let cache = net.forward_cached(black_box(x.view())).unwrap();
                net.backward_batch(&cache, g.view()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pseudo_table, bench_carsm_gradient, bench_mlp);
criterion_main!(benches);
