//! bc-dyn: bounded-confidence opinion dynamics with discontinuous right-hand
//! sides. Runs single trajectories or branch enumerations, verifies the
//! bundled example presets, and emits CSV/JSON for plotting.

use bc_cli::{runner, scenario, verify};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(
    name = "bc-dyn",
    version,
    about = "Bounded-confidence opinion dynamics: event-driven runs, \
             branch enumeration, and property verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Integrate one model run and write trajectory/report/branch files
    Run(runner::RunArgs),
    /// Print every bundled preset with its expected outcomes
    ListScenarios,
    /// Replay all presets and rebuild the property matrix
    VerifyAll(verify::VerifyArgs),
}

fn list_scenarios() {
    println!(
        "{:<28} {:<16} {:<13} {:>7}  {}",
        "name", "rule", "solution", "horizon", "initial state"
    );
    for p in scenario::presets() {
        let rule = match p.model {
            bc_core::ModelSpec::Metric { radius } => format!("metric r={radius}"),
            bc_core::ModelSpec::Topological { kappa } => format!("topological k={kappa}"),
        };
        println!(
            "{:<28} {:<16} {:<13} {:>7}  {}",
            p.name,
            rule,
            p.solution.to_string(),
            p.horizon,
            scenario::initial_summary(&p.x0)
        );
        println!("    {}", p.about);
        for c in &p.checks {
            println!("    expect: {} [{}]", c.label, c.source);
        }
    }
}

/// Cap rayon's pool when BC_DYN_THREADS is set.
fn configure_threads() {
    if let Ok(v) = std::env::var("BC_DYN_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors by default; this tool reserves 2
            // for verification failures, so usage problems map to 1.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    configure_threads();

    let result = match &cli.command {
        Command::Run(args) => runner::run(args),
        Command::ListScenarios => {
            list_scenarios();
            Ok(0)
        }
        Command::VerifyAll(args) => verify::verify_all(args),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
