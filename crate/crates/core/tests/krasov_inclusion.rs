//! Set-valued solution checks: singleton limit sets at continuity points,
//! inclusion certificates along branches, crossing and sliding consistency,
//! and joint-fork handling.

use bc_core::{
    active_manifolds, assemble_branch, classify_event, krasovsky_certificate_trajectory, leaves,
    limit_field_vertices, random_configuration, simulate_caratheodory, simulate_krasovsky,
    vector_field, BranchChoice, BranchPolicy, Configuration, Error, EventClass, Kernel,
    ManifoldId, ModelSpec, PiecewiseTrajectory, StepControl,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ONE: Kernel = Kernel::Constant(1.0);

fn d2(coords: &[f64], dim: usize, a: usize, b: usize) -> f64 {
    (0..dim)
        .map(|c| {
            let d = coords[a * dim + c] - coords[b * dim + c];
            d * d
        })
        .sum()
}

/// Signed switching value of a manifold at raw coordinates.
fn theta(m: &ManifoldId, coords: &[f64], dim: usize, spec: &ModelSpec) -> f64 {
    match *m {
        ManifoldId::MetricPair(i, j) => {
            let radius = match spec {
                ModelSpec::Metric { radius } => *radius,
                _ => panic!("metric manifold under topological spec"),
            };
            d2(coords, dim, i, j) - radius * radius
        }
        ManifoldId::TopoTriple { i, j, k } => d2(coords, dim, i, j) - d2(coords, dim, i, k),
    }
}

#[test]
fn limit_set_is_the_pointwise_field_at_continuity_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut checked = 0usize;
    for case in 0..200 {
        let n = rng.random_range(2..=8);
        let dim = rng.random_range(1..=3);
        let spec = if case % 2 == 0 {
            ModelSpec::metric()
        } else {
            ModelSpec::topological(rng.random_range(1..n))
        };
        let x = random_configuration(&mut rng, n, dim, 2.0).unwrap();
        let band = 1e-9 * (1.0 + x.scale());
        if !active_manifolds(&x, &spec, band).unwrap().is_empty() {
            continue;
        }
        let set = limit_field_vertices(&x, &spec, &ONE, band).unwrap();
        assert_eq!(set.vertices.len(), 1, "case {case}: non-singleton limit set");
        assert_eq!(set.provenance, vec!["pointwise".to_string()]);
        assert_eq!(set.vertices[0], vector_field(&spec, &ONE, &x).unwrap());
        checked += 1;
    }
    assert!(checked >= 190, "too many near-tie draws: {checked}");
}

fn all_branches(
    x0: &Configuration,
    spec: &ModelSpec,
    policy: &BranchPolicy,
    horizon: f64,
) -> Vec<PiecewiseTrajectory> {
    let nodes =
        simulate_krasovsky(x0, spec, &ONE, policy, &StepControl::default(), horizon).unwrap();
    leaves(&nodes)
        .into_iter()
        .map(|leaf| assemble_branch(&nodes, leaf).unwrap())
        .collect()
}

#[test]
fn enumerated_branches_carry_the_inclusion_certificate() {
    let policy = BranchPolicy::default();

    let metric0 = Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap();
    let metric_branches = all_branches(&metric0, &ModelSpec::metric(), &policy, 5.0);
    assert_eq!(metric_branches.len(), 3);

    let topo0 = Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap();
    let topo_branches = all_branches(&topo0, &ModelSpec::topological(1), &policy, 5.0);
    assert_eq!(topo_branches.len(), 3);

    for (spec, branches) in [
        (ModelSpec::metric(), metric_branches),
        (ModelSpec::topological(1), topo_branches),
    ] {
        for (b, traj) in branches.iter().enumerate() {
            let report = krasovsky_certificate_trajectory(traj, &spec, &ONE, 1e-5).unwrap();
            assert_eq!(report.violations, 0, "branch {b} of {spec:?}: {report:?}");
            assert!(
                report.samples_checked >= 100,
                "branch {b} of {spec:?} checked only {}",
                report.samples_checked
            );
        }
    }
}

#[test]
fn event_driven_trajectories_stay_inside_the_limit_hull() {
    let control = StepControl::default();
    let mut cases: Vec<(ModelSpec, Configuration, f64, f64)> = vec![
        (
            ModelSpec::metric(),
            Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap(),
            5.0,
            1e-5,
        ),
        (
            ModelSpec::metric(),
            Configuration::from_scalars(0.0, &[-2.0 / 3.0, 0.0, 2.0 / 3.0]).unwrap(),
            2.0,
            1e-5,
        ),
        (
            ModelSpec::metric(),
            Configuration::from_scalars(0.0, &[0.0, 0.9, 1.7]).unwrap(),
            2.0,
            1e-5,
        ),
        (
            ModelSpec::metric(),
            Configuration::from_rows(
                0.0,
                &[
                    vec![0.0, 0.0],
                    vec![1.0, 1.0 / 3.0],
                    vec![1.0, -1.0 / 3.0],
                ],
            )
            .unwrap(),
            6.0,
            1e-5,
        ),
        (
            ModelSpec::topological(1),
            Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap(),
            5.0,
            1e-5,
        ),
        (
            ModelSpec::topological(2),
            Configuration::from_scalars(
                0.0,
                &[-9.0, -9.0, -9.0, -2.0, 2.0, 9.0, 9.0, 9.0],
            )
            .unwrap(),
            4.0,
            1e-5,
        ),
    ];
    // The random draws can stay on a near-complete interaction graph, where
    // the third derivative of the flow reaches (2(n-1))^3 times the spread.
    // The differencing error h^2/6 * |x'''| then needs a looser tolerance
    // than the structured cases above.
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for case in 0..6 {
        let n = rng.random_range(3..=5);
        let dim = rng.random_range(1..=2);
        let spec = if case % 2 == 0 {
            ModelSpec::metric()
        } else {
            ModelSpec::topological(rng.random_range(1..n))
        };
        let spread = if case % 2 == 0 { 1.5 } else { 2.0 };
        cases.push((
            spec,
            random_configuration(&mut rng, n, dim, spread).unwrap(),
            2.0,
            2e-4,
        ));
    }
    for (idx, (spec, x0, horizon, tol)) in cases.iter().enumerate() {
        let traj = simulate_caratheodory(x0, spec, &ONE, &control, *horizon).unwrap();
        let report = krasovsky_certificate_trajectory(&traj, spec, &ONE, *tol).unwrap();
        assert_eq!(
            report.violations, 0,
            "case {idx} ({spec:?} from {:?}): {report:?}",
            x0.coords()
        );
    }
}

/// After a recorded crossing, the switching value must hold the landed sign
/// through the first steps of the following segment.
fn check_crossing_signs(traj: &PiecewiseTrajectory, spec: &ModelSpec) {
    let mut crossings = 0usize;
    for ev in &traj.events {
        let sign = match ev.class {
            EventClass::CrossUp => 1.0,
            EventClass::CrossDown => -1.0,
            _ => continue,
        };
        let seg = traj
            .segments
            .iter()
            .find(|s| (s.t_start - ev.t).abs() <= 1e-12 * (1.0 + ev.t.abs()))
            .expect("a segment starts at each event");
        for (t, coords) in seg.samples.iter().skip(1).take(10) {
            let th = theta(&ev.manifold, coords, traj.dim, spec);
            assert!(
                th * sign > 0.0,
                "{:?} at t = {} has theta = {th} on the wrong side after {:?}",
                ev.manifold,
                t,
                ev.class
            );
        }
        crossings += 1;
    }
    assert!(crossings > 0, "trajectory recorded no crossings");
}

#[test]
fn crossings_land_on_the_recorded_side() {
    let control = StepControl::default();
    let spec = ModelSpec::metric();
    for coords in [
        vec![-2.0 / 3.0, 0.0, 2.0 / 3.0],
        vec![0.0, 0.9, 1.7],
    ] {
        let x0 = Configuration::from_scalars(0.0, &coords).unwrap();
        let traj = simulate_caratheodory(&x0, &spec, &ONE, &control, 2.0).unwrap();
        check_crossing_signs(&traj, &spec);
    }

    // forced crossings out of the fork state, one per side
    let metric0 = Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap();
    let minus = BranchPolicy::Fixed {
        choices: vec![BranchChoice::CrossMinus],
    };
    for traj in all_branches(&metric0, &spec, &minus, 2.0) {
        check_crossing_signs(&traj, &spec);
    }
    let topo0 = Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap();
    let plus = BranchPolicy::Fixed {
        choices: vec![BranchChoice::CrossPlus],
    };
    for traj in all_branches(&topo0, &ModelSpec::topological(1), &plus, 2.0) {
        check_crossing_signs(&traj, &ModelSpec::topological(1));
    }
}

#[test]
fn sliding_segments_stay_on_the_manifold() {
    let slide = BranchPolicy::Fixed {
        choices: vec![BranchChoice::Slide { exit_time: None }],
    };
    let cases = [
        (
            ModelSpec::metric(),
            Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap(),
            3.0,
        ),
        (
            ModelSpec::topological(1),
            Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap(),
            5.0,
        ),
    ];
    for (spec, x0, horizon) in cases {
        let branches = all_branches(&x0, &spec, &slide, horizon);
        assert_eq!(branches.len(), 1);
        let traj = &branches[0];
        let mut slide_samples = 0usize;
        let manifold = traj.events[0].manifold;
        for seg in &traj.segments {
            if !seg.graph.is_sliding() {
                continue;
            }
            for (t, coords) in &seg.samples {
                let th = theta(&manifold, coords, traj.dim, &spec);
                assert!(
                    th.abs() <= 1e-8,
                    "{spec:?}: |theta| = {:.3e} off the manifold at t = {t}",
                    th.abs()
                );
                slide_samples += 1;
            }
        }
        assert!(slide_samples > 100, "{spec:?}: only {slide_samples} sliding samples");
    }
}

#[test]
fn classification_covers_outward_crossings_and_degenerate_rest() {
    // three stacked agents drag the middle agent outward fast enough that the
    // radius pair separates no matter which side of the surface is active
    let x = Configuration::from_scalars(0.0, &[0.0, 1.0, 1.9, 1.9, 1.9]).unwrap();
    let class = classify_event(&x, &ManifoldId::metric(0, 1), &ModelSpec::metric(), &ONE).unwrap();
    assert_eq!(class, EventClass::CrossUp);

    // fully coincident agents: both one-sided fields vanish, which lands in
    // the tangential row of the classification
    let rest = Configuration::from_scalars(0.0, &[0.0, 0.0, 0.0]).unwrap();
    let class =
        classify_event(&rest, &ManifoldId::topo(0, 1, 2), &ModelSpec::topological(1), &ONE)
            .unwrap();
    assert_eq!(class, EventClass::Slide);
}

#[test]
fn scripted_sliding_on_joint_manifolds_is_rejected() {
    // both gaps sit exactly at the radius, so a slide instruction would need
    // simultaneous tangency on two manifolds
    let x0 = Configuration::from_scalars(0.0, &[0.0, 1.0, 2.0]).unwrap();
    let policy = BranchPolicy::Fixed {
        choices: vec![BranchChoice::Slide { exit_time: None }],
    };
    let err = simulate_krasovsky(
        &x0,
        &ModelSpec::metric(),
        &ONE,
        &policy,
        &StepControl::default(),
        1.0,
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::UnsupportedSliding { .. }),
        "unexpected error {err:?}"
    );
}

#[test]
fn independent_forks_combine_into_product_branches() {
    // two copies of the radius-contact fork, 50 units apart; the joint fork
    // must enumerate all four sign products
    let shift = 50.0;
    let x0 = Configuration::from_scalars(
        0.0,
        &[
            -1.0 / 3.0,
            0.0,
            1.0,
            shift - 1.0 / 3.0,
            shift,
            shift + 1.0,
        ],
    )
    .unwrap();
    let branches = all_branches(&x0, &ModelSpec::metric(), &BranchPolicy::default(), 30.0);
    assert_eq!(branches.len(), 4);

    let keep = [-1.0 / 6.0, -1.0 / 6.0, 1.0];
    let merge = [2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0];
    let mut expected: Vec<Vec<f64>> = Vec::new();
    for left in [keep, merge] {
        for right in [keep, merge] {
            let mut combo: Vec<f64> = left.to_vec();
            combo.extend(right.iter().map(|v| v + shift));
            expected.push(combo);
        }
    }
    let mut matched = vec![false; expected.len()];
    for traj in &branches {
        let (_, xs) = traj.terminal();
        let hit = expected.iter().position(|e| {
            e.iter()
                .zip(xs)
                .all(|(a, b)| (a - b).abs() <= 1e-3)
        });
        let hit = hit.unwrap_or_else(|| panic!("unmatched terminal {xs:?}"));
        assert!(!matched[hit], "terminal {xs:?} matched twice");
        matched[hit] = true;
    }
    assert!(matched.iter().all(|&m| m));
}
