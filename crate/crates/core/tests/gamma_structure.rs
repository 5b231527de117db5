//! Structure of the single-neighbor assignment: totality, admissibility,
//! mutual-pair pseudoforest shape, and forward validity along frozen runs.

use bc_core::{
    build_gamma, pseudoforest_check, random_configuration, simulate_caratheodory, validity_margin,
    Configuration, FrozenGraph, Kernel, ModelSpec, StepControl,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const ONE: Kernel = Kernel::Constant(1.0);

fn min_dist2(x: &Configuration, i: usize) -> f64 {
    (0..x.n_agents())
        .filter(|&j| j != i)
        .map(|j| x.dist2(i, j))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn assignment_is_total_and_admissible_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let started = Instant::now();
    for _ in 0..10_000 {
        let n = rng.random_range(2..=16);
        let dim = rng.random_range(1..=3);
        let x = random_configuration(&mut rng, n, dim, 4.0).unwrap();
        let gamma = build_gamma(&x, &ONE).unwrap();
        for i in 0..n {
            let g = gamma.neighbor(i);
            assert_ne!(g, i, "agent {i} assigned to itself");
            assert_eq!(
                x.dist2(i, g),
                min_dist2(&x, i),
                "assignment of agent {i} is not a nearest neighbor"
            );
        }
    }
    assert!(
        started.elapsed().as_secs_f64() < 10.0,
        "10^4 assignments took {:.2} s",
        started.elapsed().as_secs_f64()
    );
}

/// Coordinates drawn from a coarse half-integer grid, so nearest-neighbor
/// ties and coincident agents are common and the later assignment passes
/// actually run.
fn grid_configuration(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Configuration {
    let coords: Vec<f64> = (0..n * dim)
        .map(|_| 0.5 * rng.random_range(-4..=4) as f64)
        .collect();
    Configuration::new(0.0, dim, coords).unwrap()
}

#[test]
fn assignment_graph_is_a_mutual_pair_pseudoforest() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..1_000 {
        let n = rng.random_range(2..=12);
        let dim = rng.random_range(1..=2);
        let x = if case % 2 == 0 {
            random_configuration(&mut rng, n, dim, 3.0).unwrap()
        } else {
            grid_configuration(&mut rng, n, dim)
        };
        let gamma = build_gamma(&x, &ONE).unwrap();
        let report = pseudoforest_check(&gamma.edges(), n).unwrap();
        assert!(
            report.pass,
            "case {case}: {:?} on coords {:?}",
            report.failures,
            x.coords()
        );
    }
}

#[test]
fn mutually_nearest_pairs_are_assigned_to_each_other() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut pairs_seen = 0usize;
    for _ in 0..500 {
        let n = rng.random_range(3..=10);
        let dim = rng.random_range(1..=3);
        let x = random_configuration(&mut rng, n, dim, 2.0).unwrap();
        let gamma = build_gamma(&x, &ONE).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                let mutual = x.dist2(i, j) == min_dist2(&x, i) && x.dist2(i, j) == min_dist2(&x, j);
                if mutual {
                    pairs_seen += 1;
                    assert_eq!(gamma.neighbor(i), j, "agent {i} not paired with {j}");
                    assert_eq!(gamma.neighbor(j), i, "agent {j} not paired with {i}");
                }
            }
        }
    }
    assert!(pairs_seen > 200, "too few mutual pairs sampled: {pairs_seen}");
}

#[test]
fn frozen_assignment_stays_valid_at_segment_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let spec = ModelSpec::topological(1);
    for run in 0..30 {
        let n = rng.random_range(3..=8);
        let dim = rng.random_range(1..=2);
        let x0 = random_configuration(&mut rng, n, dim, 2.0).unwrap();
        let traj =
            simulate_caratheodory(&x0, &spec, &ONE, &StepControl::default(), 3.0).unwrap();
        for seg in &traj.segments {
            let gamma = match &seg.graph {
                FrozenGraph::Gamma(g) => g,
                other => panic!("run {run}: nearest-neighbor run froze {other:?}"),
            };
            for (t, coords) in seg.samples.iter().take(10) {
                let cfg = Configuration::new(*t, dim, coords.clone()).unwrap();
                let margin = validity_margin(&cfg, gamma);
                assert!(
                    margin >= -1e-8 * (1.0 + cfg.scale()),
                    "run {run}: margin {margin} at t = {t}"
                );
            }
        }
    }
}
