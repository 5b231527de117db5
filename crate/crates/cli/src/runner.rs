//! The `run` subcommand: resolve flags into a model run, execute it, write
//! the requested files, and apply strict checks.

use std::path::PathBuf;
use std::str::FromStr;

use bc_core::{
    assemble_branch, check_average_invariance, check_support_contractivity, detect_convergence,
    is_caratheodory_equilibrium, krasovsky_certificate_trajectory, leaves, simulate_caratheodory,
    simulate_krasovsky, zero_in_krasovsky, BranchChoice, BranchNode, BranchPolicy, Configuration,
    Error, Kernel, ModelSpec, PiecewiseTrajectory, PropertyReport, Result, StepControl,
};

use crate::output::{
    self, EquilibriumJson, EventJson, ModelJson, RunReport,
};
use crate::scenario::{self, SolutionKind};
use crate::verify;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Metric,
    Topological,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SolutionArg {
    Caratheodory,
    Krasovsky,
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// Named preset bundling model, kernel, initial state, and checks
    #[arg(long, conflicts_with_all = ["model", "kappa", "kernel", "init"])]
    pub scenario: Option<String>,

    /// Interaction rule (the metric rule uses radius 1)
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,

    /// Neighbor count for the topological rule
    #[arg(long)]
    pub kappa: Option<usize>,

    /// Influence kernel: "constant:c" or "affsat:c0,slope,cap"
    #[arg(long)]
    pub kernel: Option<String>,

    /// Initial state: inline JSON {"n": dim, "positions": [[..], ..]} or a
    /// path to a file holding the same
    #[arg(long)]
    pub init: Option<String>,

    /// Solution notion to integrate
    #[arg(long, value_enum)]
    pub solution: Option<SolutionArg>,

    /// Fork policy for krasovsky runs:
    /// "enumerate[:max_branches,max_depth]" or "fixed:choice,choice,..."
    #[arg(long, conflicts_with = "branch")]
    pub policy: Option<String>,

    /// Single fork choice (sliding, cross_minus, cross_plus, slide@T);
    /// shorthand for a krasovsky run with a one-entry fixed policy
    #[arg(long)]
    pub branch: Option<String>,

    /// Integration horizon
    #[arg(long)]
    pub tmax: Option<f64>,

    /// Nominal integration step
    #[arg(long)]
    pub dt: Option<f64>,

    /// Write the trajectory as CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the run report as JSON here
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Write the branch tree as JSON here (krasovsky runs only)
    #[arg(long)]
    pub branches_out: Option<PathBuf>,

    /// Exit with status 2 when an expected property or scenario check fails
    #[arg(long)]
    pub strict: bool,
}

/// A fully resolved run: every default applied, every override folded in.
pub struct ResolvedRun {
    pub scenario: Option<&'static str>,
    pub spec: ModelSpec,
    pub kernel: Kernel,
    pub x0: Configuration,
    pub solution: SolutionKind,
    pub policy: BranchPolicy,
    pub horizon: f64,
    pub control: StepControl,
}

pub struct RunOutcome {
    pub trajectory: PiecewiseTrajectory,
    pub nodes: Option<Vec<BranchNode>>,
    pub branches: usize,
    pub branch_reported: usize,
}

/// Parse one fork choice, accepting "sliding" as an alias for "slide".
pub fn parse_choice(s: &str) -> Result<BranchChoice> {
    let canon = if s == "sliding" { "slide" } else { s };
    BranchChoice::from_str(canon)
}

/// Parse "enumerate", "enumerate:B,D", or "fixed:c1,c2,...".
pub fn parse_policy(s: &str) -> Result<BranchPolicy> {
    if s == "enumerate" {
        return Ok(BranchPolicy::default());
    }
    if let Some(args) = s.strip_prefix("enumerate:") {
        let parts: Vec<&str> = args.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "enumerate policy takes max_branches,max_depth, got '{args}'"
            )));
        }
        let max_branches: usize = parts[0].trim().parse().map_err(|_| {
            Error::Config(format!("bad branch budget '{}'", parts[0]))
        })?;
        let max_depth: usize = parts[1].trim().parse().map_err(|_| {
            Error::Config(format!("bad depth budget '{}'", parts[1]))
        })?;
        if max_branches == 0 || max_depth == 0 {
            return Err(Error::Config(
                "enumerate budgets must be at least 1".into(),
            ));
        }
        return Ok(BranchPolicy::Enumerate {
            max_branches,
            max_depth,
        });
    }
    if let Some(args) = s.strip_prefix("fixed:") {
        let choices = args
            .split(',')
            .map(|c| parse_choice(c.trim()))
            .collect::<Result<Vec<_>>>()?;
        if choices.is_empty() {
            return Err(Error::Config("fixed policy needs at least one choice".into()));
        }
        return Ok(BranchPolicy::Fixed { choices });
    }
    Err(Error::Config(format!(
        "unknown policy '{s}'; use enumerate[:B,D] or fixed:choice,..."
    )))
}

/// Canonical string form of a policy for reports.
pub fn policy_string(solution: SolutionKind, policy: &BranchPolicy) -> String {
    if solution == SolutionKind::Caratheodory {
        return "none".into();
    }
    match policy {
        BranchPolicy::Enumerate {
            max_branches,
            max_depth,
        } => format!("enumerate:{max_branches},{max_depth}"),
        BranchPolicy::Fixed { choices } => {
            let list: Vec<String> = choices.iter().map(|c| c.to_string()).collect();
            format!("fixed:{}", list.join(","))
        }
    }
}

/// Read the initial state from inline JSON (leading '{') or from a file.
fn load_initial(arg: &str) -> Result<Configuration> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)
            .map_err(|e| Error::Io(format!("cannot read initial state file '{arg}': {e}")))?
    };
    Configuration::from_json_str(&text)
}

pub fn resolve(args: &RunArgs) -> Result<ResolvedRun> {
    let preset = match &args.scenario {
        Some(name) => Some(scenario::find(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario '{name}'; see `bc-dyn list-scenarios`"
            ))
        })?),
        None => None,
    };

    let (spec, kernel, x0) = match &preset {
        Some(p) => (p.model, p.kernel, p.x0.clone()),
        None => {
            let init = args.init.as_deref().ok_or_else(|| {
                Error::Config("either --scenario or --init is required".into())
            })?;
            let x0 = load_initial(init)?;
            let spec = match args.model.unwrap_or(ModelKind::Metric) {
                ModelKind::Metric => {
                    if args.kappa.is_some() {
                        return Err(Error::Config(
                            "--kappa applies to the topological rule; add --model topological"
                                .into(),
                        ));
                    }
                    ModelSpec::metric()
                }
                ModelKind::Topological => ModelSpec::topological(args.kappa.unwrap_or(1)),
            };
            let kernel = match args.kernel.as_deref() {
                Some(s) => Kernel::from_str(s)?,
                None => Kernel::Constant(1.0),
            };
            (spec, kernel, x0)
        }
    };
    spec.validate(x0.n_agents())?;

    let mut solution = match (args.solution, &preset) {
        (Some(SolutionArg::Caratheodory), _) => SolutionKind::Caratheodory,
        (Some(SolutionArg::Krasovsky), _) => SolutionKind::Krasovsky,
        (None, Some(p)) => p.solution,
        (None, None) => SolutionKind::Caratheodory,
    };
    let mut policy = match &preset {
        Some(p) => p.policy.clone(),
        None => BranchPolicy::default(),
    };
    if let Some(p) = &args.policy {
        policy = parse_policy(p)?;
        if args.solution == Some(SolutionArg::Caratheodory) {
            return Err(Error::Config(
                "--policy applies to krasovsky runs".into(),
            ));
        }
        solution = SolutionKind::Krasovsky;
    }
    if let Some(b) = &args.branch {
        let choice = parse_choice(b)?;
        if args.solution == Some(SolutionArg::Caratheodory) {
            return Err(Error::Config(
                "--branch applies to krasovsky runs".into(),
            ));
        }
        policy = BranchPolicy::Fixed {
            choices: vec![choice],
        };
        solution = SolutionKind::Krasovsky;
    }

    let horizon = match args.tmax {
        Some(t) => t,
        None => preset.as_ref().map_or(10.0, |p| p.horizon),
    };
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "--tmax must be positive and finite, got {horizon}"
        )));
    }
    let dt = args.dt.unwrap_or(1e-3);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!(
            "--dt must be positive and finite, got {dt}"
        )));
    }
    let control = StepControl {
        h: dt,
        ..StepControl::default()
    };

    Ok(ResolvedRun {
        scenario: preset.map(|p| p.name),
        spec,
        kernel,
        x0,
        solution,
        policy,
        horizon,
        control,
    })
}

pub fn execute(run: &ResolvedRun) -> Result<RunOutcome> {
    match run.solution {
        SolutionKind::Caratheodory => {
            let trajectory = simulate_caratheodory(
                &run.x0,
                &run.spec,
                &run.kernel,
                &run.control,
                run.horizon,
            )?;
            Ok(RunOutcome {
                trajectory,
                nodes: None,
                branches: 1,
                branch_reported: 0,
            })
        }
        SolutionKind::Krasovsky => {
            let nodes = simulate_krasovsky(
                &run.x0,
                &run.spec,
                &run.kernel,
                &run.policy,
                &run.control,
                run.horizon,
            )?;
            let leaf_ids = leaves(&nodes);
            if leaf_ids.is_empty() {
                return Err(Error::Precondition(
                    "branch enumeration produced no complete branch".into(),
                ));
            }
            let reported = leaf_ids[0];
            let trajectory = assemble_branch(&nodes, reported)?;
            Ok(RunOutcome {
                trajectory,
                nodes: Some(nodes),
                branches: leaf_ids.len(),
                branch_reported: reported,
            })
        }
    }
}

/// Largest value the kernel can take; used to budget certificate tolerances.
fn kernel_bound(kernel: &Kernel) -> f64 {
    match *kernel {
        Kernel::Constant(c) => c,
        Kernel::AffineSaturated { cap, .. } => cap,
    }
}

/// Property checks every run reports: average drift, hull contraction,
/// energy monotonicity, and the inclusion certificate.
pub fn run_properties(run: &ResolvedRun, traj: &PiecewiseTrajectory) -> Result<Vec<PropertyReport>> {
    let mut props = Vec::new();
    props.push(check_average_invariance(traj, 1e-6));
    props.push(check_support_contractivity(
        traj,
        1e-7,
        &verify::nested_pairs(traj),
    )?);

    let scale = run.x0.scale();
    let spec = run.spec;
    let kernel = run.kernel;
    props.push(bc_core::monitor_monotonicity(
        traj,
        "lyapunov-monotonicity",
        |cfg| output::energy(cfg, &spec, &kernel),
        1e-8 * (1.0 + scale),
    )?);

    // The finite-difference derivative behind the certificate carries an
    // h^2/6 * |x'''| truncation error; |x'''| is bounded by the cube of the
    // field's Lipschitz constant times the coordinate scale.
    let n = run.x0.n_agents() as f64;
    let lam = 2.0 * kernel_bound(&run.kernel) * (n - 1.0);
    let trunc = run.control.h * run.control.h / 6.0 * lam.powi(3) * 2.0 * scale;
    let cert_tol = trunc.max(1e-6);
    let cert = krasovsky_certificate_trajectory(traj, &run.spec, &run.kernel, cert_tol)?;
    props.push(PropertyReport {
        property: "krasovsky-inclusion".into(),
        pass: cert.violations == 0,
        deviation: cert.max_residual,
        witness_t: Vec::new(),
    });

    Ok(props)
}

/// Property names a run of this model/solution combination must pass.
pub fn expected_properties(spec: &ModelSpec, solution: SolutionKind) -> Vec<&'static str> {
    let mut names = vec!["support-contractivity", "krasovsky-inclusion"];
    match (spec, solution) {
        (ModelSpec::Metric { .. }, SolutionKind::Caratheodory) => {
            names.push("average-preservation");
            names.push("lyapunov-monotonicity");
        }
        (ModelSpec::Metric { .. }, SolutionKind::Krasovsky) => {
            names.push("average-preservation");
        }
        (ModelSpec::Topological { kappa: 1 }, SolutionKind::Caratheodory) => {
            names.push("lyapunov-monotonicity");
        }
        _ => {}
    }
    names
}

pub fn build_report(
    run: &ResolvedRun,
    outcome: &RunOutcome,
    properties: Vec<PropertyReport>,
) -> Result<RunReport> {
    let traj = &outcome.trajectory;
    let terminal = traj.terminal_configuration();
    let dim = traj.dim;

    let converged = detect_convergence(traj, &run.spec, &run.kernel, 1e-8, 1.0)?;
    let eps_cluster = (1e-6 * run.x0.diameter()).max(f64::MIN_POSITIVE);
    let clusters = bc_core::detect_clusters(&terminal, &run.spec, eps_cluster)?;
    let scale = terminal.scale();
    let equilibrium = EquilibriumJson {
        pointwise_rest: is_caratheodory_equilibrium(&terminal, &run.spec, &run.kernel)?,
        zero_in_limit_hull: zero_in_krasovsky(
            &terminal,
            &run.spec,
            &run.kernel,
            1e-9 * (1.0 + scale),
        )?,
    };
    let lyapunov = output::lyapunov_series(traj, &run.spec, &run.kernel)?;

    let (t_end, xs) = traj.terminal();
    Ok(RunReport {
        scenario: run.scenario.map(|s| s.to_string()),
        model: ModelJson::from(&run.spec),
        kernel: run.kernel.to_string(),
        solution: run.solution.to_string(),
        policy: policy_string(run.solution, &run.policy),
        horizon: run.horizon,
        step: run.control.h,
        branches: outcome.branches,
        branch_reported: outcome.branch_reported,
        t_end,
        terminal: xs.chunks(dim).map(|r| r.to_vec()).collect(),
        events: traj.events.iter().map(EventJson::from).collect(),
        properties,
        converged: converged.is_some(),
        clusters,
        equilibrium,
        lyapunov,
    })
}

pub fn run(args: &RunArgs) -> Result<i32> {
    let resolved = resolve(args)?;
    let outcome = execute(&resolved)?;
    let traj = &outcome.trajectory;

    let properties = run_properties(&resolved, traj)?;
    let report = build_report(&resolved, &outcome, properties)?;

    let n = resolved.x0.n_agents();
    let dim = resolved.x0.dim();
    if let Some(path) = &args.out {
        output::write_text(path, &output::trajectory_csv(traj, n, dim))?;
        println!("wrote trajectory CSV to {}", path.display());
    }
    if let Some(path) = &args.report {
        output::write_json(path, &report)?;
        println!("wrote run report to {}", path.display());
    }
    if let Some(path) = &args.branches_out {
        match &outcome.nodes {
            Some(nodes) => {
                output::write_json(path, &output::branch_tree_json(nodes, dim))?;
                println!("wrote branch tree to {}", path.display());
            }
            None => {
                return Err(Error::Config(
                    "--branches-out applies to krasovsky runs".into(),
                ));
            }
        }
    }

    println!(
        "{} {} run, horizon {}, step {}",
        report.model.kind, report.solution, report.horizon, report.step
    );
    if resolved.solution == SolutionKind::Krasovsky {
        println!(
            "branches: {} complete, reporting branch {}",
            outcome.branches, outcome.branch_reported
        );
    }
    println!("events on reported branch: {}", traj.events.len());
    let terminal_rows: Vec<String> = report
        .terminal
        .iter()
        .map(|r| {
            let vals: Vec<String> = r.iter().map(|v| format!("{v:.6}")).collect();
            if dim == 1 {
                vals.join("")
            } else {
                format!("({})", vals.join(", "))
            }
        })
        .collect();
    println!("terminal at t = {}: [{}]", report.t_end, terminal_rows.join(", "));
    for p in &report.properties {
        println!(
            "property {}: {} (max deviation {:.3e})",
            p.property,
            if p.pass { "pass" } else { "FAIL" },
            p.deviation
        );
    }
    println!(
        "converged: {}; pointwise rest: {}; zero in limit hull: {}",
        report.converged, report.equilibrium.pointwise_rest, report.equilibrium.zero_in_limit_hull
    );

    if !args.strict {
        return Ok(0);
    }

    let mut failures = Vec::new();
    let expected = expected_properties(&resolved.spec, resolved.solution);
    for p in &report.properties {
        if expected.contains(&p.property.as_str()) && !p.pass {
            failures.push(format!(
                "expected property {} failed (deviation {:.3e})",
                p.property, p.deviation
            ));
        }
    }

    // Preset checks stay meaningful only while the run matches the preset.
    let preset_untouched = args.solution.is_none()
        && args.policy.is_none()
        && args.branch.is_none()
        && args.tmax.is_none();
    if let Some(name) = resolved.scenario {
        if preset_untouched {
            let preset = scenario::find(name).expect("resolved scenario exists");
            let eval = verify::evaluate_preset(&preset, resolved.control.h)?;
            for line in &eval.lines {
                println!(
                    "check {} [{}]: {}",
                    line.label,
                    line.source,
                    if line.pass { "pass" } else { "FAIL" }
                );
                if !line.pass {
                    failures.push(format!("scenario check failed: {} ({})", line.label, line.detail));
                }
            }
        } else {
            println!("note: run options override the preset; skipping its checks");
        }
    }

    if failures.is_empty() {
        println!("strict: all checks passed");
        Ok(0)
    } else {
        for f in &failures {
            eprintln!("strict: {f}");
        }
        Ok(2)
    }
}
