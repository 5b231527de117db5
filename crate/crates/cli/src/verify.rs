//! The `verify-all` subcommand: replay every preset against its recorded
//! expectations, then rebuild the model-by-solution property matrix from
//! seeded runs and explicit witness configurations.

use bc_core::{
    assemble_branch, check_average_invariance, check_support_contractivity, detect_clusters,
    detect_convergence, interaction_graph, is_caratheodory_equilibrium, leaves,
    positive_increment_fraction, pseudoforest_check, random_configuration, simulate_caratheodory,
    simulate_krasovsky, zero_in_krasovsky, BranchPolicy, Configuration, Error, Kernel, ModelSpec,
    PiecewiseTrajectory, Result, StepControl,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output;
use crate::scenario::{self, CheckKind, ScenarioPreset, SolutionKind, Source};

#[derive(clap::Args, Debug)]
pub struct VerifyArgs {
    /// Comma-separated preset names to check (an empty value selects none);
    /// when given, the property matrix is skipped
    #[arg(long)]
    pub filter: Option<String>,

    /// Seed for the randomized sweeps behind the property matrix
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// One evaluated expectation.
pub struct CheckLine {
    pub label: &'static str,
    pub source: Source,
    pub pass: bool,
    pub detail: String,
}

/// All evaluated expectations of one preset.
pub struct PresetOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub lines: Vec<CheckLine>,
}

/// Ten half-overlapping time pairs (t1 < t2) spanning the trajectory, used
/// for the hull-contraction checks.
pub fn nested_pairs(traj: &PiecewiseTrajectory) -> Vec<(f64, f64)> {
    let t0 = traj.t_start();
    let span = traj.t_end() - t0;
    (0..10)
        .map(|k| {
            (
                t0 + span * (k as f64) / 20.0,
                t0 + span * ((k + 10) as f64) / 20.0,
            )
        })
        .collect()
}

fn eps_cluster_for(x0: &Configuration) -> f64 {
    (1e-6 * x0.diameter()).max(f64::MIN_POSITIVE)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Match computed branch terminals against expected rows one-to-one.
fn match_terminals(terminals: &[Vec<f64>], states: &[Vec<f64>], tol: f64) -> (bool, String) {
    if terminals.len() != states.len() {
        return (
            false,
            format!(
                "expected {} terminal states, got {}",
                states.len(),
                terminals.len()
            ),
        );
    }
    let mut used = vec![false; terminals.len()];
    for (si, state) in states.iter().enumerate() {
        let found = terminals.iter().enumerate().position(|(ti, term)| {
            !used[ti]
                && term.len() == state.len()
                && term
                    .iter()
                    .zip(state)
                    .all(|(a, b)| (a - b).abs() <= tol)
        });
        match found {
            Some(ti) => used[ti] = true,
            None => {
                return (
                    false,
                    format!("no computed terminal matches expected state #{}", si + 1),
                )
            }
        }
    }
    (true, String::new())
}

pub struct PresetRun {
    /// One assembled trajectory per complete branch; index 0 is the branch
    /// the text output reports.
    pub branches: Vec<PiecewiseTrajectory>,
    pub terminals: Vec<Vec<f64>>,
}

pub fn run_preset(preset: &ScenarioPreset, control: &StepControl) -> Result<PresetRun> {
    match preset.solution {
        SolutionKind::Caratheodory => {
            let traj = simulate_caratheodory(
                &preset.x0,
                &preset.model,
                &preset.kernel,
                control,
                preset.horizon,
            )?;
            let terminals = vec![traj.terminal().1.to_vec()];
            Ok(PresetRun {
                branches: vec![traj],
                terminals,
            })
        }
        SolutionKind::Krasovsky => {
            let nodes = simulate_krasovsky(
                &preset.x0,
                &preset.model,
                &preset.kernel,
                &preset.policy,
                control,
                preset.horizon,
            )?;
            let leaf_ids = leaves(&nodes);
            if leaf_ids.is_empty() {
                return Err(Error::Precondition(format!(
                    "preset {} produced no complete branch",
                    preset.name
                )));
            }
            let branches = leaf_ids
                .iter()
                .map(|&id| assemble_branch(&nodes, id))
                .collect::<Result<Vec<_>>>()?;
            let terminals = branches.iter().map(|b| b.terminal().1.to_vec()).collect();
            Ok(PresetRun { branches, terminals })
        }
    }
}

/// Run one preset and grade every attached check.
pub fn evaluate_preset(preset: &ScenarioPreset, dt: f64) -> Result<PresetOutcome> {
    let control = StepControl {
        h: dt,
        ..StepControl::default()
    };
    let run = run_preset(preset, &control)?;
    let primary = &run.branches[0];
    let spec = &preset.model;
    let kernel = &preset.kernel;
    let x0 = &preset.x0;
    let scale = x0.scale();
    let eps_cluster = eps_cluster_for(x0);
    let terminal_cfg = primary.terminal_configuration();

    let mut lines = Vec::new();
    for check in &preset.checks {
        let (pass, detail) = match &check.kind {
            CheckKind::TerminalSet { states, tol } => {
                match_terminals(&run.terminals, states, *tol)
            }
            CheckKind::BranchCount(k) => (
                run.branches.len() == *k,
                format!("expected {k} branches, got {}", run.branches.len()),
            ),
            CheckKind::EventTime { time, tol } => match primary.events.first() {
                Some(ev) => (
                    (ev.t - time).abs() <= *tol,
                    format!("first event at t = {}, expected {time}", ev.t),
                ),
                None => (false, "no events recorded".into()),
            },
            CheckKind::ClusterBlocks {
                blocks,
                cluster_point,
            } => {
                let p = detect_clusters(&terminal_cfg, spec, eps_cluster)?;
                (
                    p.blocks == *blocks && p.is_cluster_point == *cluster_point,
                    format!(
                        "terminal blocks {:?}, cluster point {}",
                        p.blocks, p.is_cluster_point
                    ),
                )
            }
            CheckKind::BlockDistance { a, b, distance, tol } => {
                let p = detect_clusters(&terminal_cfg, spec, eps_cluster)?;
                if *a >= p.blocks.len() || *b >= p.blocks.len() {
                    (
                        false,
                        format!("partition has only {} blocks", p.blocks.len()),
                    )
                } else {
                    let d = euclid(&p.representatives[*a], &p.representatives[*b]);
                    (
                        (d - distance).abs() <= *tol,
                        format!("representative distance {d}, expected {distance}"),
                    )
                }
            }
            CheckKind::InitialPointwiseRest(expect) => {
                let rest = is_caratheodory_equilibrium(x0, spec, kernel)?;
                (rest == *expect, format!("pointwise rest = {rest}"))
            }
            CheckKind::InitialHullRest(expect) => {
                let rest = zero_in_krasovsky(x0, spec, kernel, 1e-9 * (1.0 + scale))?;
                (rest == *expect, format!("zero in limit hull = {rest}"))
            }
            CheckKind::InitialClusterPoint(expect) => {
                let p = detect_clusters(x0, spec, eps_cluster)?;
                (
                    p.is_cluster_point == *expect,
                    format!("cluster point = {}", p.is_cluster_point),
                )
            }
            CheckKind::EnergyMonotone {
                expect_pass,
                min_positive_fraction,
            } => {
                let mon = bc_core::monitor_monotonicity(
                    primary,
                    "energy",
                    |cfg| output::energy(cfg, spec, kernel),
                    1e-8 * (1.0 + scale),
                )?;
                let mut ok = mon.pass == *expect_pass;
                let mut detail = format!(
                    "monotone = {} (worst increment {:.3e})",
                    mon.pass, mon.deviation
                );
                if let Some(need) = min_positive_fraction {
                    let frac =
                        positive_increment_fraction(primary, |cfg| {
                            output::energy(cfg, spec, kernel)
                        })?;
                    ok = ok && frac >= *need;
                    detail.push_str(&format!(", increasing on {:.1}% of steps", 100.0 * frac));
                }
                (ok, detail)
            }
            CheckKind::InitialEnergy { value, tol } => {
                let e = output::energy(x0, spec, kernel)?;
                (
                    (e - value).abs() <= *tol,
                    format!("initial energy {e}, expected {value}"),
                )
            }
            CheckKind::AveragePreserved { tol } => {
                let rep = check_average_invariance(primary, *tol);
                (rep.pass, format!("max drift {:.3e}", rep.deviation))
            }
            CheckKind::Structure {
                edges,
                components,
                mutual_pair,
            } => {
                let g = interaction_graph(spec, x0)?;
                let n = x0.n_agents();
                let mut ok = true;
                let mut notes = Vec::new();
                if let Some(expected) = edges {
                    let mut got = g.edges.clone();
                    let mut want = expected.clone();
                    got.sort_unstable();
                    want.sort_unstable();
                    if got != want {
                        ok = false;
                        notes.push(format!("edges {got:?}"));
                    }
                }
                let pf = pseudoforest_check(&g, n)?;
                if !pf.pass {
                    ok = false;
                    notes.push(format!("shape violations {:?}", pf.failures));
                }
                if let Some(c) = components {
                    if pf.components != *c {
                        ok = false;
                        notes.push(format!("{} components, expected {c}", pf.components));
                    }
                }
                if let Some((a, b)) = mutual_pair {
                    let out = g.out_neighbors(n);
                    if !(out[*a].contains(b) && out[*b].contains(a)) {
                        ok = false;
                        notes.push(format!("agents {a} and {b} are not mutual"));
                    }
                }
                (ok, notes.join("; "))
            }
        };
        lines.push(CheckLine {
            label: check.label,
            source: check.source,
            pass,
            detail,
        });
    }

    Ok(PresetOutcome {
        name: preset.name,
        pass: lines.iter().all(|l| l.pass),
        lines,
    })
}

/// One row of the property matrix: a model rule and solution notion with the
/// recorded yes/no answers for average preservation (P1), hull contraction
/// (P2), and convergence to cluster points (P3).
struct MatrixRow {
    rule: &'static str,
    spec: ModelSpec,
    solution: SolutionKind,
    expected: [bool; 3],
}

fn matrix_rows() -> Vec<MatrixRow> {
    vec![
        MatrixRow {
            rule: "metric",
            spec: ModelSpec::metric(),
            solution: SolutionKind::Caratheodory,
            expected: [true, true, true],
        },
        MatrixRow {
            rule: "metric",
            spec: ModelSpec::metric(),
            solution: SolutionKind::Krasovsky,
            expected: [true, true, true],
        },
        MatrixRow {
            rule: "topological k=2",
            spec: ModelSpec::topological(2),
            solution: SolutionKind::Caratheodory,
            expected: [false, true, false],
        },
        MatrixRow {
            rule: "topological k=2",
            spec: ModelSpec::topological(2),
            solution: SolutionKind::Krasovsky,
            expected: [false, true, false],
        },
        MatrixRow {
            rule: "topological k=1",
            spec: ModelSpec::topological(1),
            solution: SolutionKind::Caratheodory,
            expected: [false, true, true],
        },
        MatrixRow {
            rule: "topological k=1",
            spec: ModelSpec::topological(1),
            solution: SolutionKind::Krasovsky,
            expected: [false, true, false],
        },
    ]
}

/// All complete solution branches of one start under the row's engine.
fn row_branches(
    row: &MatrixRow,
    x0: &Configuration,
    horizon: f64,
    control: &StepControl,
) -> Result<Vec<PiecewiseTrajectory>> {
    match row.solution {
        SolutionKind::Caratheodory => Ok(vec![simulate_caratheodory(
            x0, &row.spec, &KERNEL_ONE, control, horizon,
        )?]),
        SolutionKind::Krasovsky => {
            let nodes = simulate_krasovsky(
                x0,
                &row.spec,
                &KERNEL_ONE,
                &BranchPolicy::default(),
                control,
                horizon,
            )?;
            leaves(&nodes)
                .into_iter()
                .map(|id| assemble_branch(&nodes, id))
                .collect()
        }
    }
}

const KERNEL_ONE: Kernel = Kernel::Constant(1.0);
const MATRIX_RUNS: usize = 24;

fn converged_to_cluster(
    traj: &PiecewiseTrajectory,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<bool> {
    Ok(detect_convergence(traj, spec, kernel, 1e-8, 1.0)?
        .is_some_and(|p| p.is_cluster_point))
}

/// Compute one row's three cells from seeded random runs plus the witness
/// configurations that pin the recorded "No" answers down.
fn compute_row(row: &MatrixRow, seed: u64) -> Result<[bool; 3]> {
    let control = StepControl::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(Configuration, f64)> = Vec::new();
    for k in 0..MATRIX_RUNS {
        let (n, dim) = match row.spec {
            ModelSpec::Metric { .. } => (3 + k % 3, 1 + k % 2),
            ModelSpec::Topological { kappa } => (kappa + 2 + k % 3, 1 + k % 2),
        };
        starts.push((random_configuration(&mut rng, n, dim, 1.0)?, 40.0));
    }
    // Known asymmetric starts that make the average drift when the rule is
    // one-sided; they keep the P1 answer independent of the random draws.
    match row.spec {
        ModelSpec::Topological { kappa: 1 } => {
            starts.push((
                Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0])?,
                40.0,
            ));
        }
        ModelSpec::Topological { .. } => {
            starts.push((
                Configuration::from_scalars(0.0, &[0.0, 1.0, 2.0, 3.0, 10.0])?,
                40.0,
            ));
        }
        ModelSpec::Metric { .. } => {}
    }

    let mut p1 = true;
    let mut p2 = true;
    let mut p3 = true;
    for (x0, horizon) in &starts {
        for traj in row_branches(row, x0, *horizon, &control)? {
            p1 &= check_average_invariance(&traj, 1e-6).pass;
            p2 &= check_support_contractivity(&traj, 1e-7, &nested_pairs(&traj))?.pass;
            p3 &= converged_to_cluster(&traj, &row.spec, &KERNEL_ONE)?;
        }
    }

    // Witness solutions that rest at states which are not cluster points.
    match (row.spec, row.solution) {
        (ModelSpec::Topological { kappa: 2 }, SolutionKind::Caratheodory) => {
            let x0 =
                Configuration::from_scalars(0.0, &[0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0])?;
            let traj = simulate_caratheodory(&x0, &row.spec, &KERNEL_ONE, &control, 5.0)?;
            p3 &= converged_to_cluster(&traj, &row.spec, &KERNEL_ONE)?;
        }
        (ModelSpec::Topological { kappa: 2 }, SolutionKind::Krasovsky) => {
            let x0 = Configuration::from_scalars(
                0.0,
                &[-9.0, -9.0, -9.0, -2.0, 2.0, 9.0, 9.0, 9.0],
            )?;
            for traj in row_branches(row, &x0, 10.0, &control)? {
                p3 &= converged_to_cluster(&traj, &row.spec, &KERNEL_ONE)?;
            }
        }
        (ModelSpec::Topological { kappa: 1 }, SolutionKind::Krasovsky) => {
            // The tie state (-1,1,0,1,-1) admits the constant trajectory as a
            // solution in the hull sense, yet it is not a cluster point; that
            // stationary branch is the counterexample, no integration needed.
            let x0 = Configuration::from_scalars(0.0, &[-1.0, 1.0, 0.0, 1.0, -1.0])?;
            let stationary = zero_in_krasovsky(&x0, &row.spec, &KERNEL_ONE, 1e-9 * 2.0)?;
            let clustered = detect_clusters(&x0, &row.spec, eps_cluster_for(&x0))?
                .is_cluster_point;
            if stationary && !clustered {
                p3 = false;
            }
        }
        _ => {}
    }

    Ok([p1, p2, p3])
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "Yes"
    } else {
        "No "
    }
}

/// Print the computed matrix next to the recorded one; true when they agree.
fn print_property_matrix(seed: u64) -> Result<bool> {
    let rows = matrix_rows();
    let computed: Result<Vec<[bool; 3]>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| compute_row(row, seed.wrapping_add(1000 * i as u64)))
        .collect();
    let computed = computed?;

    println!();
    println!("property matrix (P1 average kept, P2 hull contracts, P3 clusters form):");
    println!(
        "  {:<18} {:<13} {:<4} {:<4} {:<4} verdict",
        "rule", "solution", "P1", "P2", "P3"
    );
    let mut all_ok = true;
    for (row, got) in rows.iter().zip(&computed) {
        let ok = *got == row.expected;
        all_ok &= ok;
        println!(
            "  {:<18} {:<13} {:<4} {:<4} {:<4} {}",
            row.rule,
            row.solution.to_string(),
            yes_no(got[0]),
            yes_no(got[1]),
            yes_no(got[2]),
            if ok { "as recorded" } else { "MISMATCH" }
        );
    }
    Ok(all_ok)
}

pub fn verify_all(args: &VerifyArgs) -> Result<i32> {
    let all = scenario::presets();
    let selected: Vec<ScenarioPreset> = match &args.filter {
        None => all,
        Some(f) => {
            let names: Vec<&str> = f
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let mut picked = Vec::new();
            for name in names {
                match all.iter().find(|p| p.name == name) {
                    Some(p) => picked.push(p.clone()),
                    None => {
                        return Err(Error::Config(format!(
                            "unknown preset '{name}' in --filter"
                        )))
                    }
                }
            }
            picked
        }
    };
    if selected.is_empty() {
        println!("no presets selected; nothing to verify");
        return Ok(0);
    }

    let outcomes: Result<Vec<PresetOutcome>> = selected
        .par_iter()
        .map(|p| evaluate_preset(p, 1e-3))
        .collect();
    let outcomes = outcomes?;

    let mut presets_ok = true;
    for o in &outcomes {
        println!("{} {}", if o.pass { "PASS" } else { "FAIL" }, o.name);
        for line in &o.lines {
            println!(
                "  {} {} [{}]{}",
                if line.pass { "ok  " } else { "FAIL" },
                line.label,
                line.source,
                if line.pass {
                    String::new()
                } else {
                    format!(": {}", line.detail)
                }
            );
        }
        presets_ok &= o.pass;
    }

    let matrix_ok = if args.filter.is_none() {
        print_property_matrix(args.seed)?
    } else {
        true
    };

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!();
    println!(
        "verify-all: {passed}/{} presets passed{}",
        outcomes.len(),
        if args.filter.is_none() {
            if matrix_ok {
                ", property matrix as recorded"
            } else {
                ", property matrix MISMATCH"
            }
        } else {
            ""
        }
    );
    Ok(if presets_ok && matrix_ok { 0 } else { 2 })
}
