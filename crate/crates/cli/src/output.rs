//! File emitters: trajectory CSV, run report JSON, branch-tree JSON.

use std::fmt::Write as _;
use std::path::Path;

use bc_core::{
    BranchNode, ClusterPartition, Configuration, EventRecord, Kernel, ModelSpec,
    PiecewiseTrajectory, PropertyReport, Result,
};
use serde::Serialize;

/// 17 significant decimal digits: enough to reproduce any f64 exactly.
fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a trajectory as CSV with header `t,x_1_1,...,x_N_n,event`. Rows at
/// recorded event times carry a `class:manifold` descriptor in the event
/// column; all other rows leave it empty.
pub fn trajectory_csv(traj: &PiecewiseTrajectory, n: usize, dim: usize) -> String {
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        for c in 1..=dim {
            let _ = write!(out, ",x_{i}_{c}");
        }
    }
    out.push_str(",event\n");
    let mut events: Vec<&EventRecord> = traj.events.iter().collect();
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("event times are finite"));
    for (t, xs) in traj.flat_samples() {
        out.push_str(&full(t));
        for v in &xs {
            out.push(',');
            out.push_str(&full(*v));
        }
        out.push(',');
        let here: Vec<String> = events
            .iter()
            .filter(|e| (e.t - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|e| format!("{}:{}", e.class, e.manifold))
            .collect();
        out.push_str(&here.join(";"));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
pub struct ModelJson {
    #[serde(rename = "type")]
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
}

impl From<&ModelSpec> for ModelJson {
    fn from(spec: &ModelSpec) -> Self {
        match *spec {
            ModelSpec::Metric { radius } => ModelJson {
                kind: "metric",
                radius: Some(radius),
                kappa: None,
            },
            ModelSpec::Topological { kappa } => ModelJson {
                kind: "topological",
                radius: None,
                kappa: Some(kappa),
            },
        }
    }
}

#[derive(Serialize)]
pub struct EventJson {
    pub t: f64,
    pub manifold: String,
    pub class: String,
}

impl From<&EventRecord> for EventJson {
    fn from(e: &EventRecord) -> Self {
        EventJson {
            t: e.t,
            manifold: e.manifold.to_string(),
            class: e.class.to_string(),
        }
    }
}

#[derive(Serialize)]
pub struct EquilibriumJson {
    /// the tie-broken pointwise field vanishes exactly at the terminal state
    pub pointwise_rest: bool,
    /// zero velocity lies in the convex hull of the limit fields there
    pub zero_in_limit_hull: bool,
}

#[derive(Serialize)]
pub struct LyapunovJson {
    pub name: &'static str,
    /// (t, value) pairs, decimated to a plottable length
    pub series: Vec<(f64, f64)>,
}

/// Everything a run reports: inputs, terminal state, events, property checks,
/// convergence, and the energy trace.
#[derive(Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub model: ModelJson,
    pub kernel: String,
    pub solution: String,
    pub policy: String,
    pub horizon: f64,
    pub step: f64,
    /// number of complete branches the run produced (1 unless enumerating)
    pub branches: usize,
    /// index of the branch the trajectory outputs follow
    pub branch_reported: usize,
    pub t_end: f64,
    /// terminal positions of the reported branch, one row per agent
    pub terminal: Vec<Vec<f64>>,
    pub events: Vec<EventJson>,
    pub properties: Vec<PropertyReport>,
    pub converged: bool,
    /// partition of the terminal state into coincidence blocks
    pub clusters: ClusterPartition,
    pub equilibrium: EquilibriumJson,
    pub lyapunov: LyapunovJson,
}

/// Energy-name and series for the report: V for the metric model, W for the
/// ranked-neighbor model, sampled along the trajectory.
pub fn lyapunov_series(
    traj: &PiecewiseTrajectory,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<LyapunovJson> {
    let samples = traj.flat_samples();
    let stride = (samples.len() / 256).max(1);
    let mut series = Vec::new();
    let mut idx = 0;
    while idx < samples.len() {
        let (t, xs) = &samples[idx];
        let cfg = Configuration::new(*t, traj.dim, xs.clone())?;
        let v = energy(&cfg, spec, kernel)?;
        series.push((*t, v));
        idx += stride;
    }
    let (t, xs) = samples.last().expect("trajectory has samples");
    if series.last().map(|(lt, _)| lt) != Some(t) {
        let cfg = Configuration::new(*t, traj.dim, xs.clone())?;
        series.push((*t, energy(&cfg, spec, kernel)?));
    }
    Ok(LyapunovJson {
        name: energy_name(spec),
        series,
    })
}

pub fn energy(cfg: &Configuration, spec: &ModelSpec, kernel: &Kernel) -> Result<f64> {
    match *spec {
        ModelSpec::Metric { radius } => bc_core::lyapunov_v_metric(cfg, kernel, radius),
        ModelSpec::Topological { kappa } => bc_core::lyapunov_w_topological(cfg, kernel, kappa),
    }
}

pub fn energy_name(spec: &ModelSpec) -> &'static str {
    match spec {
        ModelSpec::Metric { .. } => "V",
        ModelSpec::Topological { .. } => "W",
    }
}

#[derive(Serialize)]
pub struct BranchEventJson {
    pub time: f64,
    pub manifold: String,
    pub choice: String,
}

#[derive(Serialize)]
pub struct BranchNodeJson {
    pub branch_id: usize,
    pub parent: Option<usize>,
    pub event: Option<BranchEventJson>,
    pub terminal_state: TerminalJson,
}

#[derive(Serialize)]
pub struct TerminalJson {
    pub t: f64,
    pub positions: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct BranchTreeJson {
    pub nodes: Vec<BranchNodeJson>,
    /// node ids that are complete solutions (no children)
    pub leaves: Vec<usize>,
}

pub fn branch_tree_json(nodes: &[BranchNode], dim: usize) -> BranchTreeJson {
    let tree_nodes = nodes
        .iter()
        .map(|n| {
            let (t, xs) = n.trajectory.terminal();
            BranchNodeJson {
                branch_id: n.branch_id,
                parent: n.parent,
                event: n.event.as_ref().map(|e| BranchEventJson {
                    time: e.time,
                    manifold: e.manifold.to_string(),
                    choice: e.choice.to_string(),
                }),
                terminal_state: TerminalJson {
                    t,
                    positions: xs.chunks(dim).map(|r| r.to_vec()).collect(),
                },
            }
        })
        .collect();
    BranchTreeJson {
        nodes: tree_nodes,
        leaves: bc_core::leaves(nodes),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
