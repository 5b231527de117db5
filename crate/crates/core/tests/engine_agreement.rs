//! Cross-checks between the event-driven engine, the exact linear flow, and
//! the brute-force small-step reference integrator.

use bc_core::{
    assemble_branch, euler_oracle, interaction_graph, leaves, propagate_linear_exact,
    random_configuration, rk4_step, simulate_caratheodory, simulate_krasovsky, BranchPolicy,
    Configuration, Kernel, ModelSpec, StepControl,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ONE: Kernel = Kernel::Constant(1.0);

/// Right-hand side of the dynamics frozen on a fixed edge set, for a constant
/// kernel of strength `c`.
fn frozen_rhs(edges: &[(usize, usize)], dim: usize, c: f64) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |x: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        for &(i, j) in edges {
            for k in 0..dim {
                out[i * dim + k] += c * (x[j * dim + k] - x[i * dim + k]);
            }
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn engine_terminals_match_the_small_step_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let control = StepControl::default();
    let horizon = 1.5;
    for run in 0..30 {
        let n = rng.random_range(2..=5);
        let dim = rng.random_range(1..=2);
        let (spec, spread) = if run % 2 == 0 {
            (ModelSpec::metric(), 1.5)
        } else {
            (ModelSpec::topological(rng.random_range(1..n)), 2.0)
        };
        let x0 = random_configuration(&mut rng, n, dim, spread).unwrap();
        let traj = simulate_caratheodory(&x0, &spec, &ONE, &control, horizon).unwrap();
        let oracle = euler_oracle(&x0, &spec, &ONE, horizon, 1e-5).unwrap();
        let (_, engine_xs) = traj.terminal();
        let (_, oracle_xs) = oracle.terminal();
        let diff = max_abs_diff(engine_xs, oracle_xs);
        assert!(
            diff <= 1e-4,
            "run {run} ({spec:?}): terminal mismatch {diff:.3e} from {:?}",
            x0.coords()
        );
    }
}

#[test]
fn exact_linear_flow_matches_stepped_rk4() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let dim = rng.random_range(1..=2);
        let x0 = random_configuration(&mut rng, n, dim, 1.2).unwrap();
        let graph = interaction_graph(&ModelSpec::metric(), &x0).unwrap();
        let exact = propagate_linear_exact(&x0, &ONE, &graph.edges, 1.0).unwrap();
        let rhs = frozen_rhs(&graph.edges, dim, 1.0);
        let mut state = x0.coords().to_vec();
        for _ in 0..1000 {
            state = rk4_step(&rhs, &state, 1e-3);
        }
        let diff = max_abs_diff(exact.coords(), &state);
        assert!(diff <= 1e-9, "flow mismatch {diff:.3e}");
    }
}

#[test]
fn rk4_converges_at_fourth_order_on_a_frozen_segment() {
    let x0 = Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap();
    let graph = interaction_graph(&ModelSpec::metric(), &x0).unwrap();
    let exact = propagate_linear_exact(&x0, &ONE, &graph.edges, 1.0).unwrap();
    let rhs = frozen_rhs(&graph.edges, 1, 1.0);
    let global_error = |h: f64| {
        let mut state = x0.coords().to_vec();
        let steps = (1.0 / h).round() as usize;
        for _ in 0..steps {
            state = rk4_step(&rhs, &state, h);
        }
        max_abs_diff(exact.coords(), &state)
    };
    let e_coarse = global_error(0.02);
    let e_fine = global_error(0.01);
    let ratio = e_coarse / e_fine;
    assert!(
        (12.0..=20.0).contains(&ratio),
        "error ratio {ratio} (coarse {e_coarse:.3e}, fine {e_fine:.3e})"
    );
}

#[test]
fn radius_contact_event_is_located_at_the_closed_form_time() {
    // the outer pair starts at distance 4/3 and the gap contracts like
    // (4/3) e^{-t}, so it reaches the unit radius at t = ln(4/3)
    let x0 = Configuration::from_scalars(0.0, &[-2.0 / 3.0, 0.0, 2.0 / 3.0]).unwrap();
    let traj =
        simulate_caratheodory(&x0, &ModelSpec::metric(), &ONE, &StepControl::default(), 2.0)
            .unwrap();
    assert!(!traj.events.is_empty(), "no contact event found");
    let t_contact = traj.events[0].t;
    let expected = (4.0f64 / 3.0).ln();
    assert!(
        (t_contact - expected).abs() <= 1e-6,
        "contact at {t_contact}, expected {expected}"
    );
}

#[test]
fn chain_event_times_match_the_reference_integrator() {
    let x0 = Configuration::from_scalars(0.0, &[0.0, 0.9, 1.7]).unwrap();
    let spec = ModelSpec::metric();
    let traj = simulate_caratheodory(&x0, &spec, &ONE, &StepControl::default(), 2.0).unwrap();
    let oracle = euler_oracle(&x0, &spec, &ONE, 2.0, 1e-5).unwrap();
    assert!(!traj.events.is_empty());
    assert_eq!(traj.events.len(), oracle.events.len());
    for (rec, t_oracle) in traj.events.iter().zip(&oracle.events) {
        assert!(
            (rec.t - t_oracle).abs() <= 2e-3,
            "event at {} vs reference {}",
            rec.t,
            t_oracle
        );
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let x0 = random_configuration(&mut rng, 5, 2, 1.5).unwrap();
    let control = StepControl::default();
    let a = simulate_caratheodory(&x0, &ModelSpec::metric(), &ONE, &control, 2.0).unwrap();
    let b = simulate_caratheodory(&x0, &ModelSpec::metric(), &ONE, &control, 2.0).unwrap();
    assert_eq!(a.flat_samples(), b.flat_samples());

    let tie = Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap();
    let spec = ModelSpec::topological(1);
    let policy = BranchPolicy::default();
    let run = |_: usize| {
        let nodes = simulate_krasovsky(&tie, &spec, &ONE, &policy, &control, 5.0).unwrap();
        leaves(&nodes)
            .into_iter()
            .map(|leaf| assemble_branch(&nodes, leaf).unwrap().flat_samples())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(0), run(1));
}
