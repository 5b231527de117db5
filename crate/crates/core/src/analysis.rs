//! Property monitors for computed trajectories: average preservation, support
//! contractivity, cluster and equilibrium detection, the Lyapunov-style
//! energies, and the out-degree-one structure check for the nearest-neighbor
//! interaction graph.

use serde::Serialize;

use crate::carath::PiecewiseTrajectory;
use crate::config::Configuration;
use crate::error::Error;
use crate::hull::hull_membership;
use crate::kernel::Kernel;
use crate::krasov::{active_manifolds, limit_field_vertices};
use crate::model::{self, InteractionGraph, ModelSpec};
use crate::Result;

/// Outcome of one property check. The witness times are nonempty exactly when
/// the check fails and point at the worst offending samples.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub pass: bool,
    pub deviation: f64,
    pub witness_t: Vec<f64>,
}

impl PropertyReport {
    fn passing(property: &str, deviation: f64) -> PropertyReport {
        PropertyReport {
            property: property.to_string(),
            pass: true,
            deviation,
            witness_t: Vec::new(),
        }
    }

    fn failing(property: &str, deviation: f64, witness_t: Vec<f64>) -> PropertyReport {
        PropertyReport {
            property: property.to_string(),
            pass: false,
            deviation,
            witness_t,
        }
    }
}

/// Partition of the agents into groups of (nearly) coincident opinions.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterPartition {
    /// disjoint, exhaustive index blocks, each sorted, ordered by first member
    pub blocks: Vec<Vec<usize>>,
    /// centroid opinion of each block
    pub representatives: Vec<Vec<f64>>,
    /// true when every agent's pointwise neighbor set stays inside its block
    pub is_cluster_point: bool,
}

impl ClusterPartition {
    /// index of the block containing agent `i`
    pub fn block_of(&self, i: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&i))
    }
}

fn uf_find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = i;
    while parent[cur] != cur {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

fn uf_union(parent: &mut [usize], a: usize, b: usize) {
    let ra = uf_find(parent, a);
    let rb = uf_find(parent, b);
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Largest drift of the opinion average from its initial value over all
/// samples. The metric model conserves the average exactly (interactions come
/// in action-reaction pairs); the ranked-neighbor model does not.
pub fn check_average_invariance(traj: &PiecewiseTrajectory, tol: f64) -> PropertyReport {
    let dim = traj.dim;
    let mut avg0: Option<Vec<f64>> = None;
    let mut worst = 0.0f64;
    let mut worst_t = traj.t_start();
    traj.each_sample(|t, x| {
        let n = x.len() / dim;
        let mut avg = vec![0.0; dim];
        for i in 0..n {
            for c in 0..dim {
                avg[c] += x[i * dim + c];
            }
        }
        for v in avg.iter_mut() {
            *v /= n as f64;
        }
        match &avg0 {
            None => avg0 = Some(avg),
            Some(a0) => {
                let drift: f64 = avg
                    .iter()
                    .zip(a0.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if drift > worst {
                    worst = drift;
                    worst_t = t;
                }
            }
        }
    });
    if worst <= tol {
        PropertyReport::passing("average-preservation", worst)
    } else {
        PropertyReport::failing("average-preservation", worst, vec![worst_t])
    }
}

/// Check that opinions never leave the convex hull of an earlier snapshot:
/// for each requested time pair `t1 < t2`, every opinion at `t2` must lie in
/// the hull of the opinions at `t1` (within `tol`).
pub fn check_support_contractivity(
    traj: &PiecewiseTrajectory,
    tol: f64,
    sample_pairs: &[(f64, f64)],
) -> Result<PropertyReport> {
    let mut worst = 0.0f64;
    let mut witness = Vec::new();
    for &(t1, t2) in sample_pairs {
        if !(t1 < t2) {
            return Err(Error::Precondition(format!(
                "time pairs must be increasing, got ({t1}, {t2})"
            )));
        }
        let c1 = traj.configuration_at(t1)?;
        let c2 = traj.configuration_at(t2)?;
        let n = c1.n_agents();
        let points: Vec<Vec<f64>> = (0..n).map(|i| c1.agent(i).to_vec()).collect();
        let mut pair_fails = false;
        for i in 0..n {
            let res = hull_membership(&points, c2.agent(i), tol)?;
            worst = worst.max(res.distance);
            if !res.inside {
                pair_fails = true;
            }
        }
        if pair_fails {
            witness.push(t2);
        }
    }
    Ok(if witness.is_empty() {
        PropertyReport::passing("support-contractivity", worst)
    } else {
        PropertyReport::failing("support-contractivity", worst, witness)
    })
}

/// Group agents into blocks of mutually close opinions (connected components
/// of the `distance <= eps_cluster` graph) and test whether the configuration
/// is a cluster point: every agent's pointwise neighbors lie in its own
/// block, so the grouped dynamics are internally at rest.
pub fn detect_clusters(
    x: &Configuration,
    spec: &ModelSpec,
    eps_cluster: f64,
) -> Result<ClusterPartition> {
    if !(eps_cluster > 0.0) || !eps_cluster.is_finite() {
        return Err(Error::Domain(format!(
            "cluster tolerance must be > 0, got {eps_cluster}"
        )));
    }
    spec.validate(x.n_agents())?;
    let n = x.n_agents();
    let dim = x.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if x.dist(i, j) <= eps_cluster {
                uf_union(&mut parent, i, j);
            }
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = uf_find(&mut parent, i);
        by_root[r].push(i);
    }
    let mut blocks: Vec<Vec<usize>> = by_root.into_iter().filter(|b| !b.is_empty()).collect();
    blocks.sort_by_key(|b| b[0]);
    let representatives: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            let mut c = vec![0.0; dim];
            for &i in b {
                for (cc, v) in c.iter_mut().zip(x.agent(i)) {
                    *cc += v;
                }
            }
            for v in c.iter_mut() {
                *v /= b.len() as f64;
            }
            c
        })
        .collect();
    let mut block_of = vec![0usize; n];
    for (bi, b) in blocks.iter().enumerate() {
        for &i in b {
            block_of[i] = bi;
        }
    }
    let mut is_cluster_point = true;
    'outer: for i in 0..n {
        let neighbors = match *spec {
            ModelSpec::Metric { radius } => model::metric_neighbors(x, i, radius)?,
            ModelSpec::Topological { kappa } => model::topological_neighbors(x, i, kappa)?,
        };
        for j in neighbors {
            if block_of[j] != block_of[i] {
                is_cluster_point = false;
                break 'outer;
            }
        }
    }
    Ok(ClusterPartition {
        blocks,
        representatives,
        is_cluster_point,
    })
}

/// Interaction energy of the radius-bounded model: the pair potential grows
/// like the kernel integral up to the radius and saturates beyond it, so the
/// energy is smooth in the distances and flat across disconnected pairs.
pub fn lyapunov_v_metric(x: &Configuration, kernel: &Kernel, radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!("radius must be > 0, got {radius}")));
    }
    let n = x.n_agents();
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                v += kernel.integral_rs(x.dist(i, j).min(radius));
            }
        }
    }
    Ok(v)
}

/// Interaction energy of the ranked-neighbor model: the kernel integral
/// summed over each agent's selected neighbors under the pointwise
/// tie-broken rule.
pub fn lyapunov_w_topological(x: &Configuration, kernel: &Kernel, kappa: usize) -> Result<f64> {
    ModelSpec::topological(kappa).validate(x.n_agents())?;
    let n = x.n_agents();
    let mut w = 0.0;
    for i in 0..n {
        for j in model::topological_neighbors(x, i, kappa)? {
            w += kernel.integral_rs(x.dist(i, j));
        }
    }
    Ok(w)
}

/// Largest positive increment of a scalar between consecutive samples inside
/// one smooth segment; increments across events are not charged because the
/// monitored energies may jump when the interaction graph changes.
pub fn monitor_monotonicity<F>(
    traj: &PiecewiseTrajectory,
    property: &str,
    mut scalar: F,
    tol: f64,
) -> Result<PropertyReport>
where
    F: FnMut(&Configuration) -> Result<f64>,
{
    let mut worst = 0.0f64;
    let mut worst_t = traj.t_start();
    for seg in &traj.segments {
        let mut prev: Option<f64> = None;
        for (t, xs) in &seg.samples {
            let cfg = Configuration::new(*t, traj.dim, xs.clone())?;
            let val = scalar(&cfg)?;
            if let Some(p) = prev {
                let inc = val - p;
                if inc > worst {
                    worst = inc;
                    worst_t = *t;
                }
            }
            prev = Some(val);
        }
    }
    Ok(if worst <= tol {
        PropertyReport::passing(property, worst)
    } else {
        PropertyReport::failing(property, worst, vec![worst_t])
    })
}

/// Fraction of within-segment consecutive increments of the scalar that are
/// strictly positive. Useful to witness genuinely increasing energies rather
/// than isolated rounding upticks.
pub fn positive_increment_fraction<F>(traj: &PiecewiseTrajectory, mut scalar: F) -> Result<f64>
where
    F: FnMut(&Configuration) -> Result<f64>,
{
    let mut total = 0usize;
    let mut positive = 0usize;
    for seg in &traj.segments {
        let mut prev: Option<f64> = None;
        for (t, xs) in &seg.samples {
            let cfg = Configuration::new(*t, traj.dim, xs.clone())?;
            let val = scalar(&cfg)?;
            if let Some(p) = prev {
                total += 1;
                if val > p {
                    positive += 1;
                }
            }
            prev = Some(val);
        }
    }
    if total == 0 {
        return Err(Error::Precondition(
            "increment fraction needs at least two samples in one segment".into(),
        ));
    }
    Ok(positive as f64 / total as f64)
}

/// Structure report for an out-degree-one interaction graph.
#[derive(Clone, Debug, Serialize)]
pub struct PseudoforestReport {
    pub pass: bool,
    pub components: usize,
    /// one line per violated component, empty when the check passes
    pub failures: Vec<String>,
}

/// Check the defining shape of the nearest-neighbor graph: every weakly
/// connected component must contain exactly one cycle, that cycle must be a
/// mutual pair, and the pair must be reachable along out-edges from every
/// node of the component.
pub fn pseudoforest_check(graph: &InteractionGraph, n: usize) -> Result<PseudoforestReport> {
    let adjacency = graph.out_neighbors(n);
    let mut succ = vec![0usize; n];
    for (i, out) in adjacency.iter().enumerate() {
        if out.len() != 1 {
            return Err(Error::Precondition(format!(
                "node {} has out-degree {}, the check needs exactly 1",
                i + 1,
                out.len()
            )));
        }
        succ[i] = out[0];
        if out[0] >= n {
            return Err(Error::Precondition(format!(
                "node {} points outside the graph",
                i + 1
            )));
        }
    }

    // walk the successor map once, labeling every node with the cycle its
    // forward orbit lands on
    let mut state = vec![0u8; n];
    let mut cycle_id: Vec<usize> = vec![usize::MAX; n];
    let mut cycle_lengths: Vec<usize> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = succ[v];
        }
        let cid = if state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("v is on the path");
            let cid = cycle_lengths.len();
            cycle_lengths.push(path.len() - pos);
            for &p in &path[pos..] {
                cycle_id[p] = cid;
            }
            cid
        } else {
            cycle_id[v]
        };
        for &p in &path {
            if cycle_id[p] == usize::MAX {
                cycle_id[p] = cid;
            }
            state[p] = 2;
        }
    }

    // weak components over the undirected edges
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, &s) in succ.iter().enumerate() {
        uf_union(&mut parent, i, s);
    }
    let mut comp_cycles: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = uf_find(&mut parent, i);
        let c = cycle_id[i];
        if !comp_cycles[r].contains(&c) {
            comp_cycles[r].push(c);
        }
    }
    let mut components = 0usize;
    let mut failures = Vec::new();
    for (root, cycles) in comp_cycles.iter().enumerate() {
        if cycles.is_empty() {
            continue;
        }
        components += 1;
        if cycles.len() != 1 {
            failures.push(format!(
                "component of node {} contains {} cycles",
                root + 1,
                cycles.len()
            ));
            continue;
        }
        let len = cycle_lengths[cycles[0]];
        if len != 2 {
            failures.push(format!(
                "component of node {} closes a cycle of length {len}, expected a mutual pair",
                root + 1
            ));
        }
    }
    Ok(PseudoforestReport {
        pass: failures.is_empty(),
        components,
        failures,
    })
}

/// Distance of the state from rest: the field norm away from switching
/// manifolds, or the distance from zero to the hull of the limit fields when
/// ties are active.
fn stationarity_residual(
    cfg: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    hull_tol: f64,
) -> Result<f64> {
    let band = 1e-9 * (1.0 + cfg.scale());
    let active = active_manifolds(cfg, spec, band)?;
    if active.is_empty() {
        let f = model::vector_field(spec, kernel, cfg)?;
        Ok(f.iter().map(|v| v * v).sum::<f64>().sqrt())
    } else {
        let set = limit_field_vertices(cfg, spec, kernel, band)?;
        let zero = vec![0.0; cfg.coords().len()];
        Ok(hull_membership(&set.vertices, &zero, hull_tol)?.distance)
    }
}

/// Decide whether the trajectory has settled: throughout the trailing window
/// the state must be within `eps_conv` of rest (in the hull sense on
/// switching manifolds) and the cluster partition must not change. Returns
/// the terminal partition when converged.
pub fn detect_convergence(
    traj: &PiecewiseTrajectory,
    spec: &ModelSpec,
    kernel: &Kernel,
    eps_conv: f64,
    window: f64,
) -> Result<Option<ClusterPartition>> {
    if !(eps_conv > 0.0) || !eps_conv.is_finite() {
        return Err(Error::Domain(format!(
            "convergence tolerance must be > 0, got {eps_conv}"
        )));
    }
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::Domain(format!(
            "window must be > 0, got {window}"
        )));
    }
    let samples = traj.flat_samples();
    let t_end = traj.t_end();
    let t_lo = (t_end - window).max(traj.t_start());
    let tail: Vec<&(f64, Vec<f64>)> = samples
        .iter()
        .filter(|(t, _)| *t >= t_lo - 1e-12 * (1.0 + t_end.abs()))
        .collect();
    if tail.is_empty() {
        return Ok(None);
    }
    let stride = (tail.len() / 256).max(1);
    let mut idx = 0;
    while idx < tail.len() {
        let (t, xs) = tail[idx];
        let cfg = Configuration::new(*t, traj.dim, xs.clone())?;
        if stationarity_residual(&cfg, spec, kernel, eps_conv)? > eps_conv {
            return Ok(None);
        }
        idx += stride;
    }
    // always include the terminal sample
    let (t, xs) = tail[tail.len() - 1];
    let terminal = Configuration::new(*t, traj.dim, xs.clone())?;
    if stationarity_residual(&terminal, spec, kernel, eps_conv)? > eps_conv {
        return Ok(None);
    }

    let initial = Configuration::new(traj.initial.0, traj.dim, traj.initial.1.clone())?;
    let eps_cluster = (1e-6 * initial.diameter()).max(f64::MIN_POSITIVE);
    let (t0, x0) = tail[0];
    let first = Configuration::new(*t0, traj.dim, x0.clone())?;
    let p_first = detect_clusters(&first, spec, eps_cluster)?;
    let p_last = detect_clusters(&terminal, spec, eps_cluster)?;
    if p_first.blocks != p_last.blocks {
        return Ok(None);
    }
    Ok(Some(p_last))
}

/// Exact rest test for the pointwise tie-broken field.
pub fn is_caratheodory_equilibrium(
    x: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<bool> {
    let f = model::vector_field(spec, kernel, x)?;
    Ok(f.iter().all(|v| *v == 0.0))
}
