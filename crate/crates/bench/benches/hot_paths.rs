//! Hot-path benchmarks: field evaluation, the single-neighbor selection,
//! hull membership at a tie, and short event-driven runs.

use std::hint::black_box;

use bc_core::{
    build_gamma, interaction_graph, random_configuration, simulate_caratheodory, vector_field,
    zero_in_krasovsky, Configuration, Kernel, ModelSpec, StepControl,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ONE: Kernel = Kernel::Constant(1.0);

fn bench_vector_field(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_configuration(&mut rng, 32, 2, 2.0).unwrap();
    c.bench_function("vector_field metric n=32", |b| {
        b.iter(|| vector_field(&ModelSpec::metric(), &ONE, black_box(&x)).unwrap())
    });
    c.bench_function("vector_field topological k=3 n=32", |b| {
        b.iter(|| vector_field(&ModelSpec::topological(3), &ONE, black_box(&x)).unwrap())
    });
}

fn bench_selection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_configuration(&mut rng, 32, 2, 2.0).unwrap();
    c.bench_function("build_gamma n=32", |b| {
        b.iter(|| build_gamma(black_box(&x), &ONE).unwrap())
    });
    c.bench_function("interaction_graph metric n=32", |b| {
        b.iter(|| interaction_graph(&ModelSpec::metric(), black_box(&x)).unwrap())
    });
}

fn bench_hull(c: &mut Criterion) {
    // the middle agent is tied between both sides, so the limit set carries
    // several vertices and membership runs the full minimum-norm search
    let x = Configuration::from_scalars(0.0, &[-1.0, 1.0, 0.0, 1.0, -1.0]).unwrap();
    let spec = ModelSpec::topological(1);
    c.bench_function("zero_in_krasovsky tied 5-agent", |b| {
        b.iter(|| zero_in_krasovsky(black_box(&x), &spec, &ONE, 2e-9).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_configuration(&mut rng, 16, 2, 1.5).unwrap();
    let control = StepControl::default();
    c.bench_function("simulate metric n=16 t=1", |b| {
        b.iter(|| {
            simulate_caratheodory(black_box(&x), &ModelSpec::metric(), &ONE, &control, 1.0)
                .unwrap()
        })
    });
    c.bench_function("simulate topological k=2 n=16 t=1", |b| {
        b.iter(|| {
            simulate_caratheodory(black_box(&x), &ModelSpec::topological(2), &ONE, &control, 1.0)
                .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_vector_field,
    bench_selection,
    bench_hull,
    bench_simulate
);
criterion_main!(benches);
