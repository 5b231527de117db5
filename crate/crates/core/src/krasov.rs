use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::carath::{
    crossing_class, run_frozen_segment, theta_band, EventRecord, FrozenGraph, Monitor,
    PiecewiseTrajectory, ResidualReport, Segment, SegmentEnd,
};
use crate::config::{dist2, scale_of, Configuration};
use crate::error::Error;
use crate::hull::hull_membership;
use crate::integrate::{locate_predicate, rk4_step_inplace, Rk4Scratch, StepControl};
use crate::kernel::Kernel;
use crate::model::{self, InteractionGraph, ModelSpec};
use crate::Result;

/// Switching manifold in state space: a pair at the interaction radius, or a
/// distance tie between a ranked neighbor and an outside competitor.
///
/// Constructors canonicalize the index order, so equal manifolds compare
/// equal. The sign convention for the switching function is
/// `theta = |x_i - x_j|^2 - radius^2` for a metric pair and
/// `theta = |x_j - x_i|^2 - |x_k - x_i|^2` for a topological triple with
/// `j < k`; the minus side keeps the pair connected (metric) or selects the
/// lower-indexed competitor (topological), matching the strict pointwise rule
/// at a tie.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ManifoldId {
    MetricPair(usize, usize),
    TopoTriple { i: usize, j: usize, k: usize },
}

impl ManifoldId {
    pub fn metric(i: usize, j: usize) -> ManifoldId {
        ManifoldId::MetricPair(i.min(j), i.max(j))
    }

    pub fn topo(i: usize, j: usize, k: usize) -> ManifoldId {
        ManifoldId::TopoTriple {
            i,
            j: j.min(k),
            k: j.max(k),
        }
    }
}

impl fmt::Display for ManifoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ManifoldId::MetricPair(i, j) => write!(f, "metric:{}-{}", i + 1, j + 1),
            ManifoldId::TopoTriple { i, j, k } => {
                write!(f, "topo:{}-{}/{}", i + 1, j + 1, k + 1)
            }
        }
    }
}

/// How the two one-sided fields behave at a manifold point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventClass {
    /// both fields push the switching function up: transversal crossing
    CrossUp,
    /// both fields push it down: transversal crossing
    CrossDown,
    /// both fields point at the manifold: the state is trapped on it
    Slide,
    /// both fields point away: the manifold can be left to either side
    Leave,
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventClass::CrossUp => "cross_up",
            EventClass::CrossDown => "cross_down",
            EventClass::Slide => "slide",
            EventClass::Leave => "leave",
        };
        f.write_str(s)
    }
}

/// switching function value; `radius2` is ignored for topological triples
fn theta_of(coords: &[f64], dim: usize, m: &ManifoldId, radius2: f64) -> f64 {
    match *m {
        ManifoldId::MetricPair(i, j) => dist2(coords, dim, i, j) - radius2,
        ManifoldId::TopoTriple { i, j, k } => {
            dist2(coords, dim, i, j) - dist2(coords, dim, i, k)
        }
    }
}

/// directional derivative of the switching function along `v`
pub(crate) fn grad_dot(coords: &[f64], dim: usize, m: &ManifoldId, v: &[f64]) -> f64 {
    match *m {
        ManifoldId::MetricPair(i, j) => {
            let mut acc = 0.0;
            for c in 0..dim {
                let dx = coords[i * dim + c] - coords[j * dim + c];
                let dv = v[i * dim + c] - v[j * dim + c];
                acc += dx * dv;
            }
            2.0 * acc
        }
        ManifoldId::TopoTriple { i, j, k } => {
            let mut acc = 0.0;
            for c in 0..dim {
                let xj = coords[j * dim + c] - coords[i * dim + c];
                let vj = v[j * dim + c] - v[i * dim + c];
                let xk = coords[k * dim + c] - coords[i * dim + c];
                let vk = v[k * dim + c] - v[i * dim + c];
                acc += xj * vj - xk * vk;
            }
            2.0 * acc
        }
    }
}

fn validate_manifold(m: &ManifoldId, spec: &ModelSpec, n: usize) -> Result<()> {
    match (m, spec) {
        (ManifoldId::MetricPair(i, j), ModelSpec::Metric { .. }) => {
            if *i >= n || *j >= n || i == j {
                return Err(Error::Config(format!("invalid pair manifold {m} for {n} agents")));
            }
        }
        (ManifoldId::TopoTriple { i, j, k }, ModelSpec::Topological { .. }) => {
            if *i >= n || *j >= n || *k >= n || i == j || i == k || j == k {
                return Err(Error::Config(format!(
                    "invalid triple manifold {m} for {n} agents"
                )));
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "manifold {m} does not belong to the requested model"
            )));
        }
    }
    Ok(())
}

/// Tie resolutions forced onto the pointwise rule while building an edge set:
/// explicit on/off states for metric pairs often plus preferred orderings for
/// tied topological competitors.
#[derive(Clone, Debug, Default)]
pub(crate) struct Forced {
    metric_on: Vec<(usize, usize, bool)>,
    topo_pref: Vec<(usize, usize, usize)>,
}

impl Forced {
    pub(crate) fn from_sigmas(manifolds: &[ManifoldId], sigmas: &[i8]) -> Forced {
        let mut f = Forced::default();
        for (m, &s) in manifolds.iter().zip(sigmas) {
            match *m {
                // minus side of the pair manifold keeps the edge on
                ManifoldId::MetricPair(i, j) => f.metric_on.push((i, j, s < 0)),
                // minus side of the triple manifold ranks j ahead of k
                ManifoldId::TopoTriple { i, j, k } => {
                    if s < 0 {
                        f.topo_pref.push((i, j, k));
                    } else {
                        f.topo_pref.push((i, k, j));
                    }
                }
            }
        }
        f
    }

    fn pref(&self, agent: usize, a: usize, b: usize) -> Option<Ordering> {
        for &(ag, first, second) in &self.topo_pref {
            if ag == agent {
                if a == first && b == second {
                    return Some(Ordering::Less);
                }
                if a == second && b == first {
                    return Some(Ordering::Greater);
                }
            }
        }
        None
    }
}

/// Edge set of the pointwise rule with the given tie resolutions forced.
pub(crate) fn forced_selection_edges(
    x: &Configuration,
    spec: &ModelSpec,
    forced: &Forced,
) -> Vec<(usize, usize)> {
    let n = x.n_agents();
    let mut edges = Vec::new();
    match *spec {
        ModelSpec::Metric { radius } => {
            let r2 = radius * radius;
            for i in 0..n {
                for j in (i + 1)..n {
                    let on = forced
                        .metric_on
                        .iter()
                        .find(|&&(a, b, _)| (a, b) == (i, j))
                        .map(|&(_, _, on)| on)
                        .unwrap_or_else(|| x.dist2(i, j) < r2);
                    if on {
                        edges.push((i, j));
                        edges.push((j, i));
                    }
                }
            }
        }
        ModelSpec::Topological { kappa } => {
            for i in 0..n {
                let mut cands: Vec<usize> = (0..n).filter(|&c| c != i).collect();
                cands.sort_by(|&a, &b| {
                    if let Some(o) = forced.pref(i, a, b) {
                        return o;
                    }
                    x.dist2(i, a)
                        .partial_cmp(&x.dist2(i, b))
                        .expect("finite distances")
                        .then(a.cmp(&b))
                });
                for &j in cands.iter().take(kappa) {
                    edges.push((i, j));
                }
            }
        }
    }
    edges
}

fn edges_field(x: &Configuration, kernel: &Kernel, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut out = vec![0.0; x.coords().len()];
    model::graph_rhs(edges, kernel, x.coords(), x.dim(), &mut out);
    out
}

/// Switching manifolds within `tol` (an opinion-distance tolerance) of the
/// state: metric pairs near the radius, and tied competitor distances that
/// straddle the selection cutoff. Competitor ties between coincident agents
/// are skipped because both resolutions generate the same field.
pub fn active_manifolds(
    x: &Configuration,
    spec: &ModelSpec,
    tol: f64,
) -> Result<Vec<ManifoldId>> {
    spec.validate(x.n_agents())?;
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::Domain(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = x.n_agents();
    let mut out = Vec::new();
    match *spec {
        ModelSpec::Metric { radius } => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if (x.dist(i, j) - radius).abs() <= tol {
                        out.push(ManifoldId::MetricPair(i, j));
                    }
                }
            }
        }
        ModelSpec::Topological { kappa } => {
            let tolc = 1e-12 * (1.0 + x.scale());
            for i in 0..n {
                let mut cands: Vec<(f64, usize)> = (0..n)
                    .filter(|&c| c != i)
                    .map(|c| (x.dist(i, c), c))
                    .collect();
                cands.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                for a in 0..kappa {
                    for b in kappa..cands.len() {
                        if cands[b].0 - cands[a].0 > tol {
                            continue;
                        }
                        let (ja, jb) = (cands[a].1, cands[b].1);
                        if x.dist(ja, jb) <= tolc {
                            continue;
                        }
                        out.push(ManifoldId::topo(i, ja.min(jb), ja.max(jb)));
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// The two limits of the vector field across one switching manifold, holding
/// every other interaction at its strict pointwise value. Returned as
/// `(minus, plus)` in the manifold's sign convention.
pub fn one_sided_fields(
    x: &Configuration,
    manifold: &ManifoldId,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate(x.n_agents())?;
    validate_manifold(manifold, spec, x.n_agents())?;
    let single = std::slice::from_ref(manifold);
    let fm = edges_field(
        x,
        kernel,
        &forced_selection_edges(x, spec, &Forced::from_sigmas(single, &[-1])),
    );
    let fp = edges_field(
        x,
        kernel,
        &forced_selection_edges(x, spec, &Forced::from_sigmas(single, &[1])),
    );
    Ok((fm, fp))
}

/// Convex weight `alpha` on the minus-side field that makes the blend
/// `alpha * f_minus + (1 - alpha) * f_plus` tangent to the manifold, when one
/// exists in `[0, 1]`. Both fields tangent and equal yields the symmetric
/// weight `1/2`; both tangent but different is reported as a numeric error
/// because no finite test can pick a weight.
pub fn sliding_coefficient(
    x: &Configuration,
    manifold: &ManifoldId,
    f_minus: &[f64],
    f_plus: &[f64],
) -> Result<Option<f64>> {
    let len = x.coords().len();
    if f_minus.len() != len || f_plus.len() != len {
        return Err(Error::Precondition(format!(
            "field length {} or {} does not match the {} state entries",
            f_minus.len(),
            f_plus.len(),
            len
        )));
    }
    let gm = grad_dot(x.coords(), x.dim(), manifold, f_minus);
    let gp = grad_dot(x.coords(), x.dim(), manifold, f_plus);
    let den = gp - gm;
    if den == 0.0 {
        if gp == 0.0 {
            if f_minus == f_plus {
                return Ok(Some(0.5));
            }
            return Err(Error::Numeric(format!(
                "both one-sided fields are tangent to {manifold} but differ; \
                 the sliding weight is undetermined"
            )));
        }
        return Ok(None);
    }
    let alpha = gp / den;
    if (0.0..=1.0).contains(&alpha) {
        Ok(Some(alpha))
    } else {
        Ok(None)
    }
}

/// Classify a manifold point by the normal components of its one-sided
/// fields: crossings when both agree, sliding when both point inward, leaving
/// when both point outward. Degenerate tangencies fall back to sliding, the
/// conservative reading.
pub fn classify_event(
    x: &Configuration,
    manifold: &ManifoldId,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<EventClass> {
    let (fm, fp) = one_sided_fields(x, manifold, spec, kernel)?;
    let up = grad_dot(x.coords(), x.dim(), manifold, &fp);
    let um = grad_dot(x.coords(), x.dim(), manifold, &fm);
    Ok(if up > 0.0 && um > 0.0 {
        EventClass::CrossUp
    } else if up < 0.0 && um < 0.0 {
        EventClass::CrossDown
    } else if up <= 0.0 && um >= 0.0 {
        EventClass::Slide
    } else if up > 0.0 && um <= 0.0 {
        EventClass::Leave
    } else {
        EventClass::Slide
    })
}

/// Extreme points of the set-valued right-hand side at `x`: one field per
/// admissible resolution of the ties within `tol`, deduplicated by value.
#[derive(Clone, Debug)]
pub struct LimitFieldSet {
    pub vertices: Vec<Vec<f64>>,
    /// human-readable tie resolution that produced each vertex
    pub provenance: Vec<String>,
}

const RESOLUTION_GUARD: u128 = 1 << 20;

fn combinations(items: &[usize], take: usize) -> Vec<Vec<usize>> {
    if take == 0 {
        return vec![Vec::new()];
    }
    if take > items.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..take).collect();
    loop {
        out.push(idx.iter().map(|&p| items[p]).collect());
        // advance the lexicographically smallest index vector
        let mut pos = take;
        while pos > 0 {
            pos -= 1;
            if idx[pos] + (take - pos) < items.len() {
                idx[pos] += 1;
                for p in pos + 1..take {
                    idx[p] = idx[p - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

fn push_vertex(
    field: Vec<f64>,
    label: String,
    seen: &mut HashMap<Vec<u64>, ()>,
    vertices: &mut Vec<Vec<f64>>,
    provenance: &mut Vec<String>,
) {
    let key: Vec<u64> = field.iter().map(|v| v.to_bits()).collect();
    if seen.insert(key, ()).is_none() {
        vertices.push(field);
        provenance.push(label);
    }
}

/// Enumerate the limit fields over every resolution of the ties within `tol`
/// of the state. More than `2^20` distinct resolutions is refused as a
/// combinatorial explosion.
pub fn limit_field_vertices(
    x: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
) -> Result<LimitFieldSet> {
    spec.validate(x.n_agents())?;
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::Domain(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = x.n_agents();
    let dim = x.dim();
    let mut seen = HashMap::new();
    let mut vertices = Vec::new();
    let mut provenance = Vec::new();
    match *spec {
        ModelSpec::Metric { radius } => {
            let mut active = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if (x.dist(i, j) - radius).abs() <= tol {
                        active.push((i, j));
                    }
                }
            }
            if active.len() >= 128 || (1u128 << active.len()) > RESOLUTION_GUARD {
                return Err(Error::Combinatorial {
                    resolutions: 1u128 << active.len().min(127),
                });
            }
            for mask in 0..(1usize << active.len()) {
                let forced = Forced {
                    metric_on: active
                        .iter()
                        .enumerate()
                        .map(|(b, &(i, j))| (i, j, mask >> b & 1 == 1))
                        .collect(),
                    topo_pref: Vec::new(),
                };
                let edges = forced_selection_edges(x, spec, &forced);
                let field = edges_field(x, kernel, &edges);
                let label = if active.is_empty() {
                    "pointwise".to_string()
                } else {
                    forced
                        .metric_on
                        .iter()
                        .map(|&(i, j, on)| {
                            format!("{}-{}={}", i + 1, j + 1, if on { "on" } else { "off" })
                        })
                        .collect::<Vec<_>>()
                        .join(";")
                };
                push_vertex(field, label, &mut seen, &mut vertices, &mut provenance);
            }
        }
        ModelSpec::Topological { kappa } => {
            let mut base = vec![0.0; n * dim];
            // per-agent tie groups straddling the selection cutoff
            let mut choices: Vec<(usize, Vec<usize>, usize)> = Vec::new();
            for i in 0..n {
                let mut cands: Vec<(f64, usize)> = (0..n)
                    .filter(|&c| c != i)
                    .map(|c| (x.dist(i, c), c))
                    .collect();
                cands.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let mut fixed: Vec<usize> = Vec::new();
                let mut slots = kappa;
                let mut g_start = 0;
                while g_start < cands.len() && slots > 0 {
                    let mut g_end = g_start + 1;
                    while g_end < cands.len() && cands[g_end].0 - cands[g_end - 1].0 <= tol {
                        g_end += 1;
                    }
                    let group: Vec<usize> =
                        cands[g_start..g_end].iter().map(|c| c.1).collect();
                    if group.len() <= slots {
                        slots -= group.len();
                        fixed.extend(group);
                    } else {
                        choices.push((i, group, slots));
                        slots = 0;
                    }
                    g_start = g_end;
                }
                for &j in &fixed {
                    let d = x.dist(i, j);
                    let a = kernel.strength(d);
                    for c in 0..dim {
                        base[i * dim + c] += a * (x.coords()[j * dim + c] - x.coords()[i * dim + c]);
                    }
                }
            }
            let mut count: u128 = 1;
            let mut option_sets: Vec<(usize, Vec<Vec<usize>>)> = Vec::new();
            for (i, group, slots) in &choices {
                let combos = combinations(group, *slots);
                count = count.saturating_mul(combos.len() as u128);
                if count > RESOLUTION_GUARD {
                    return Err(Error::Combinatorial { resolutions: count });
                }
                option_sets.push((*i, combos));
            }
            let mut odometer = vec![0usize; option_sets.len()];
            loop {
                let mut field = base.clone();
                let mut parts = Vec::new();
                for (pos, (i, combos)) in option_sets.iter().enumerate() {
                    let chosen = &combos[odometer[pos]];
                    for &j in chosen {
                        let d = x.dist(*i, j);
                        let a = kernel.strength(d);
                        for c in 0..dim {
                            field[i * dim + c] +=
                                a * (x.coords()[j * dim + c] - x.coords()[i * dim + c]);
                        }
                    }
                    parts.push(format!(
                        "{}:{{{}}}",
                        i + 1,
                        chosen
                            .iter()
                            .map(|&j| (j + 1).to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    ));
                }
                let label = if parts.is_empty() {
                    "pointwise".to_string()
                } else {
                    parts.join(";")
                };
                push_vertex(field, label, &mut seen, &mut vertices, &mut provenance);
                // advance the odometer
                let mut pos = option_sets.len();
                loop {
                    if pos == 0 {
                        return Ok(LimitFieldSet {
                            vertices,
                            provenance,
                        });
                    }
                    pos -= 1;
                    odometer[pos] += 1;
                    if odometer[pos] < option_sets[pos].1.len() {
                        break;
                    }
                    odometer[pos] = 0;
                }
            }
        }
    }
    Ok(LimitFieldSet {
        vertices,
        provenance,
    })
}

/// Whether the zero field lies in the convex hull of the limit fields at `x`,
/// the stationarity test for trapped states. Tie activity is detected with a
/// scale-relative band; `tol` governs the hull inclusion itself.
pub fn zero_in_krasovsky(
    x: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
) -> Result<bool> {
    let band = 1e-9 * (1.0 + x.scale());
    let set = limit_field_vertices(x, spec, kernel, band)?;
    let zero = vec![0.0; x.coords().len()];
    Ok(hull_membership(&set.vertices, &zero, tol)?.inside)
}

fn certify_triple(
    t0: f64,
    x0: &[f64],
    t1: f64,
    x1: &[f64],
    t2: f64,
    x2: &[f64],
    dim: usize,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
    report: &mut ResidualReport,
) -> Result<()> {
    let h0 = t1 - t0;
    let h1 = t2 - t1;
    if !(h0 > 0.0 && h1 > 0.0) {
        return Err(Error::Precondition(format!(
            "samples are not strictly increasing in time near t = {t1}"
        )));
    }
    // Three-point derivative at the middle sample. The steps flanking an
    // event boundary are shorter than the interior ones, so the weights must
    // account for uneven spacing to keep second-order accuracy there.
    let w0 = -h1 / (h0 * (h0 + h1));
    let w1 = (h1 - h0) / (h0 * h1);
    let w2 = h0 / (h1 * (h0 + h1));
    let fd: Vec<f64> = (0..x1.len())
        .map(|k| w0 * x0[k] + w1 * x1[k] + w2 * x2[k])
        .collect();
    let cfg = Configuration::new(t1, dim, x1.to_vec())?;
    let band = 1e-7 * (1.0 + cfg.scale());
    let set = limit_field_vertices(&cfg, spec, kernel, band)?;
    let res = hull_membership(&set.vertices, &fd, tol)?;
    report.max_residual = report.max_residual.max(res.distance);
    if !res.inside {
        report.violations += 1;
    }
    report.samples_checked += 1;
    Ok(())
}

/// Certify that finite differences of the samples stay in the convex hull of
/// the limit fields: the defining inclusion of the set-valued solution
/// concept. Samples must come from one smooth piece; use the trajectory
/// variant to handle event boundaries.
pub fn krasovsky_certificate(
    samples: &[(f64, Vec<f64>)],
    dim: usize,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
) -> Result<ResidualReport> {
    if samples.len() < 3 {
        return Err(Error::Precondition(format!(
            "certificate needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let mut report = ResidualReport {
        max_residual: 0.0,
        violations: 0,
        samples_checked: 0,
    };
    for w in samples.windows(3) {
        certify_triple(
            w[0].0, &w[0].1, w[1].0, &w[1].1, w[2].0, &w[2].1, dim, spec, kernel, tol,
            &mut report,
        )?;
    }
    Ok(report)
}

/// Run the inclusion certificate per smooth segment of a trajectory, striding
/// long segments down to roughly a hundred checks each.
pub fn krasovsky_certificate_trajectory(
    traj: &PiecewiseTrajectory,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
) -> Result<ResidualReport> {
    let mut report = ResidualReport {
        max_residual: 0.0,
        violations: 0,
        samples_checked: 0,
    };
    for seg in &traj.segments {
        let s = &seg.samples;
        if s.len() < 3 {
            continue;
        }
        let stride = (s.len() / 120).max(1);
        let mut c = 1;
        while c + 1 < s.len() {
            certify_triple(
                s[c - 1].0,
                &s[c - 1].1,
                s[c].0,
                &s[c].1,
                s[c + 1].0,
                &s[c + 1].1,
                traj.dim,
                spec,
                kernel,
                tol,
                &mut report,
            )?;
            c += stride;
        }
    }
    if report.samples_checked == 0 {
        return Err(Error::Precondition(
            "trajectory has no segment with enough samples to certify".into(),
        ));
    }
    Ok(report)
}

/// Continuation picked at one fork of the set-valued dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BranchChoice {
    /// step onto the minus side of the manifold
    CrossMinus,
    /// step onto the plus side
    CrossPlus,
    /// follow the manifold, optionally leaving it at the given time
    Slide { exit_time: Option<f64> },
}

impl BranchChoice {
    fn same_kind(&self, other: &BranchChoice) -> bool {
        matches!(
            (self, other),
            (BranchChoice::CrossMinus, BranchChoice::CrossMinus)
                | (BranchChoice::CrossPlus, BranchChoice::CrossPlus)
                | (BranchChoice::Slide { .. }, BranchChoice::Slide { .. })
        )
    }
}

impl fmt::Display for BranchChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchChoice::CrossMinus => f.write_str("cross_minus"),
            BranchChoice::CrossPlus => f.write_str("cross_plus"),
            BranchChoice::Slide { exit_time: None } => f.write_str("slide"),
            BranchChoice::Slide {
                exit_time: Some(t),
            } => write!(f, "slide@{t}"),
        }
    }
}

impl FromStr for BranchChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_minus" => Ok(BranchChoice::CrossMinus),
            "cross_plus" => Ok(BranchChoice::CrossPlus),
            "slide" => Ok(BranchChoice::Slide { exit_time: None }),
            other => {
                if let Some(t) = other.strip_prefix("slide@") {
                    let et: f64 = t.parse().map_err(|_| {
                        Error::Config(format!("bad slide exit time '{t}'"))
                    })?;
                    if !(et > 0.0) || !et.is_finite() {
                        return Err(Error::Config(format!(
                            "slide exit time must be positive and finite, got {et}"
                        )));
                    }
                    Ok(BranchChoice::Slide {
                        exit_time: Some(et),
                    })
                } else {
                    Err(Error::Config(format!("unknown branch choice '{other}'")))
                }
            }
        }
    }
}

/// How forks of the set-valued dynamics are explored.
#[derive(Clone, Debug)]
pub enum BranchPolicy {
    /// spawn every admissible continuation, within the given budgets
    Enumerate {
        max_branches: usize,
        max_depth: usize,
    },
    /// follow one path, consuming the listed choices fork by fork; when the
    /// list runs out, the side selected by the strict pointwise rule is taken
    Fixed { choices: Vec<BranchChoice> },
}

impl Default for BranchPolicy {
    fn default() -> Self {
        BranchPolicy::Enumerate {
            max_branches: 16,
            max_depth: 3,
        }
    }
}

/// The fork record attached to a branch: when, where, and which way.
#[derive(Clone, Debug)]
pub struct BranchEvent {
    pub time: f64,
    pub manifold: ManifoldId,
    pub choice: BranchChoice,
}

/// One piece of the branch tree: the trajectory from its fork (or the initial
/// state) to its own terminal point, which is either the horizon or the next
/// fork.
#[derive(Clone, Debug)]
pub struct BranchNode {
    pub branch_id: usize,
    pub parent: Option<usize>,
    pub event: Option<BranchEvent>,
    pub trajectory: PiecewiseTrajectory,
}

/// Node indices with no children, i.e. complete solution endpoints.
pub fn leaves(nodes: &[BranchNode]) -> Vec<usize> {
    let mut is_parent = vec![false; nodes.len()];
    for n in nodes {
        if let Some(p) = n.parent {
            if p < is_parent.len() {
                is_parent[p] = true;
            }
        }
    }
    (0..nodes.len()).filter(|&i| !is_parent[i]).collect()
}

/// Concatenate the lineage of `leaf` into one trajectory, recording each fork
/// choice as an event.
pub fn assemble_branch(nodes: &[BranchNode], leaf: usize) -> Result<PiecewiseTrajectory> {
    if leaf >= nodes.len() {
        return Err(Error::Config(format!(
            "leaf {leaf} out of range for {} nodes",
            nodes.len()
        )));
    }
    let mut chain = vec![leaf];
    let mut cur = leaf;
    while let Some(p) = nodes[cur].parent {
        if chain.len() > nodes.len() {
            return Err(Error::Config("branch parent links form a cycle".into()));
        }
        chain.push(p);
        cur = p;
    }
    chain.reverse();
    let mut traj = nodes[chain[0]].trajectory.clone();
    for &id in &chain[1..] {
        let node = &nodes[id];
        if let Some(ev) = &node.event {
            let class = match ev.choice {
                BranchChoice::CrossMinus => EventClass::CrossDown,
                BranchChoice::CrossPlus => EventClass::CrossUp,
                BranchChoice::Slide { .. } => EventClass::Slide,
            };
            traj.events.push(EventRecord {
                t: ev.time,
                manifold: ev.manifold.clone(),
                class,
            });
        }
        traj.extend_with(node.trajectory.clone());
    }
    traj.branch = leaf;
    Ok(traj)
}

/// admissible continuation at a fork
#[derive(Clone, Debug)]
struct ForkOption {
    label: BranchChoice,
    sigmas: Vec<i8>,
    slide: bool,
}

struct Fork {
    t: f64,
    state: Vec<f64>,
    manifolds: Vec<ManifoldId>,
    options: Vec<ForkOption>,
}

/// side the strict pointwise rule selects at an exact tie
fn default_sigma(m: &ManifoldId) -> i8 {
    match m {
        // strict inequality leaves a pair exactly at the radius disconnected
        ManifoldId::MetricPair(..) => 1,
        // the index tie-break ranks the lower competitor first
        ManifoldId::TopoTriple { .. } => -1,
    }
}

fn sigma_label(sigma: i8) -> BranchChoice {
    if sigma > 0 {
        BranchChoice::CrossPlus
    } else {
        BranchChoice::CrossMinus
    }
}

/// Enumerate the admissible continuations at a state on the given manifolds:
/// every joint side assignment whose forced field immediately moves off the
/// manifolds in the assigned directions, plus sliding when a single manifold
/// traps the flow. Options are ordered with the strict-rule sides first.
fn fork_options(
    cfg: &Configuration,
    manifolds: &[ManifoldId],
    spec: &ModelSpec,
    kernel: &Kernel,
    include_slide: bool,
) -> Result<Vec<ForkOption>> {
    let k = manifolds.len();
    if k >= 20 {
        return Err(Error::Combinatorial {
            resolutions: 1u128 << k.min(127),
        });
    }
    let mut opts = Vec::new();
    for mask in 0..(1usize << k) {
        let sigmas: Vec<i8> = manifolds
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let s = default_sigma(m);
                if mask >> b & 1 == 1 {
                    -s
                } else {
                    s
                }
            })
            .collect();
        let forced = Forced::from_sigmas(manifolds, &sigmas);
        let edges = forced_selection_edges(cfg, spec, &forced);
        let field = edges_field(cfg, kernel, &edges);
        let admissible = manifolds.iter().zip(&sigmas).all(|(m, &s)| {
            f64::from(s) * grad_dot(cfg.coords(), cfg.dim(), m, &field) > 0.0
        });
        if admissible {
            opts.push(ForkOption {
                label: sigma_label(sigmas[0]),
                sigmas,
                slide: false,
            });
        }
    }
    if k == 1 && include_slide {
        let (fm, fp) = one_sided_fields(cfg, &manifolds[0], spec, kernel)?;
        if sliding_coefficient(cfg, &manifolds[0], &fm, &fp)?.is_some() {
            opts.push(ForkOption {
                label: BranchChoice::Slide { exit_time: None },
                sigmas: Vec::new(),
                slide: true,
            });
        }
    }
    Ok(opts)
}

enum Mode {
    Free { forced: Option<Forced> },
    Slide {
        manifold: ManifoldId,
        exit_time: Option<f64>,
    },
}

struct Pending {
    parent: Option<usize>,
    event: Option<BranchEvent>,
    depth: usize,
    t: f64,
    state: Vec<f64>,
    mode: Mode,
    latched: Vec<ManifoldId>,
}

fn pending_from_option(
    fork: &Fork,
    opt: &ForkOption,
    exit_time: Option<f64>,
    parent: usize,
    depth: usize,
) -> Pending {
    let (choice, mode) = if opt.slide {
        (
            BranchChoice::Slide { exit_time },
            Mode::Slide {
                manifold: fork.manifolds[0].clone(),
                exit_time,
            },
        )
    } else {
        (
            opt.label,
            Mode::Free {
                forced: Some(Forced::from_sigmas(&fork.manifolds, &opt.sigmas)),
            },
        )
    };
    Pending {
        parent: Some(parent),
        event: Some(BranchEvent {
            time: fork.t,
            manifold: fork.manifolds[0].clone(),
            choice,
        }),
        depth,
        t: fork.t,
        state: fork.state.clone(),
        mode,
        latched: fork.manifolds.clone(),
    }
}

fn expand_fork(
    fork: &Fork,
    parent: usize,
    depth: usize,
    policy: &BranchPolicy,
    cursor: &mut usize,
    nodes_len: usize,
    queue_len: usize,
) -> Result<Vec<Pending>> {
    if fork.options.is_empty() {
        return Err(Error::UnsupportedSliding {
            manifolds: fork.manifolds.iter().map(|m| m.to_string()).collect(),
        });
    }
    match policy {
        BranchPolicy::Enumerate {
            max_branches,
            max_depth,
        } => {
            if depth > *max_depth {
                return Err(Error::BranchBudget {
                    branches: nodes_len,
                    depth,
                });
            }
            let total = nodes_len + queue_len + fork.options.len();
            if total > *max_branches {
                return Err(Error::BranchBudget {
                    branches: total,
                    depth,
                });
            }
            Ok(fork
                .options
                .iter()
                .map(|o| pending_from_option(fork, o, None, parent, depth))
                .collect())
        }
        BranchPolicy::Fixed { choices } => {
            let picked = choices.get(*cursor).copied();
            let (opt, exit_time) = match picked {
                Some(choice) => {
                    *cursor += 1;
                    if matches!(choice, BranchChoice::Slide { .. }) && fork.manifolds.len() > 1 {
                        return Err(Error::UnsupportedSliding {
                            manifolds: fork
                                .manifolds
                                .iter()
                                .map(|m| m.to_string())
                                .collect(),
                        });
                    }
                    let found = fork
                        .options
                        .iter()
                        .find(|o| o.label.same_kind(&choice))
                        .cloned();
                    let opt = found.ok_or_else(|| {
                        Error::Config(format!(
                            "branch choice {choice} is not admissible at t = {} on {}",
                            fork.t, fork.manifolds[0]
                        ))
                    })?;
                    let exit = match choice {
                        BranchChoice::Slide { exit_time } => exit_time,
                        _ => None,
                    };
                    (opt, exit)
                }
                None => {
                    let default = sigma_label(default_sigma(&fork.manifolds[0]));
                    let opt = fork
                        .options
                        .iter()
                        .find(|o| !o.slide && o.label.same_kind(&default))
                        .or_else(|| fork.options.first())
                        .cloned()
                        .expect("options are nonempty");
                    (opt, None)
                }
            };
            Ok(vec![pending_from_option(fork, &opt, exit_time, parent, depth)])
        }
    }
}

/// where a sliding run stopped
enum SlideEnd {
    /// reached the requested time cap (horizon or exit time)
    Cap { state: Vec<f64> },
    /// the tangency weight left `[0, 1]`: the flow pushes off the manifold
    AlphaExit {
        t: f64,
        state: Vec<f64>,
        side: i8,
    },
    /// an unrelated switching function crossed while sliding
    BaseEvent {
        t: f64,
        state: Vec<f64>,
        manifold: ManifoldId,
    },
    /// an outside competitor overtook the blended tie: the slide dissolves
    TieBreak {
        t: f64,
        state: Vec<f64>,
        manifold: ManifoldId,
    },
}

/// Interactions untouched by the blended tie: all other pairs or the other
/// ranked neighbors, evaluated by the strict rule at the segment start.
fn slide_base(
    cfg: &Configuration,
    spec: &ModelSpec,
    manifold: &ManifoldId,
) -> Result<InteractionGraph> {
    let n = cfg.n_agents();
    validate_manifold(manifold, spec, n)?;
    match (*manifold, spec) {
        (ManifoldId::MetricPair(pi, pj), ModelSpec::Metric { radius }) => {
            let r2 = radius * radius;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if (i, j) == (pi, pj) {
                        continue;
                    }
                    if cfg.dist2(i, j) < r2 {
                        edges.push((i, j));
                        edges.push((j, i));
                    }
                }
            }
            Ok(InteractionGraph { edges })
        }
        (ManifoldId::TopoTriple { i, j, k }, ModelSpec::Topological { kappa }) => {
            let mut edges = Vec::new();
            for m in 0..n {
                if m == i {
                    continue;
                }
                for t in model::topological_neighbors(cfg, m, *kappa)? {
                    edges.push((m, t));
                }
            }
            let mut others: Vec<usize> =
                (0..n).filter(|&c| c != i && c != j && c != k).collect();
            others.sort_by(|&a, &b| {
                cfg.dist2(i, a)
                    .partial_cmp(&cfg.dist2(i, b))
                    .expect("finite distances")
                    .then(a.cmp(&b))
            });
            for &t in others.iter().take(kappa - 1) {
                edges.push((i, t));
            }
            Ok(InteractionGraph { edges })
        }
        _ => Err(Error::Config(format!(
            "manifold {manifold} does not belong to the requested model"
        ))),
    }
}

/// raw tangency weight of the blend at `xs` given the base field in `base`
fn slide_alpha_raw(
    xs: &[f64],
    dim: usize,
    kernel: &Kernel,
    m: &ManifoldId,
    base: &[f64],
) -> f64 {
    let gd_base = grad_dot(xs, dim, m, base);
    let (gd_em, gd_ep) = match *m {
        ManifoldId::MetricPair(i, j) => {
            let d2v = dist2(xs, dim, i, j);
            let a = kernel.strength(d2v.sqrt());
            (-4.0 * a * d2v, 0.0)
        }
        ManifoldId::TopoTriple { i, j, k } => {
            let aj = kernel.strength(dist2(xs, dim, i, j).sqrt());
            let ak = kernel.strength(dist2(xs, dim, i, k).sqrt());
            let mut dot_j = 0.0;
            let mut dot_k = 0.0;
            for c in 0..dim {
                let kj = xs[k * dim + c] - xs[j * dim + c];
                dot_j += (xs[j * dim + c] - xs[i * dim + c]) * kj;
                dot_k += (xs[k * dim + c] - xs[i * dim + c]) * kj;
            }
            (2.0 * aj * dot_j, 2.0 * ak * dot_k)
        }
    };
    let num = gd_base + gd_ep;
    let den = gd_ep - gd_em;
    if den > 0.0 {
        num / den
    } else {
        0.5
    }
}

/// add the blended tie pulls with weight `alpha` on the minus side
fn apply_blend(
    xs: &[f64],
    dim: usize,
    kernel: &Kernel,
    m: &ManifoldId,
    alpha: f64,
    dx: &mut [f64],
) {
    match *m {
        ManifoldId::MetricPair(i, j) => {
            let a = kernel.strength(dist2(xs, dim, i, j).sqrt());
            for c in 0..dim {
                let pull = alpha * a * (xs[j * dim + c] - xs[i * dim + c]);
                dx[i * dim + c] += pull;
                dx[j * dim + c] -= pull;
            }
        }
        ManifoldId::TopoTriple { i, j, k } => {
            let aj = kernel.strength(dist2(xs, dim, i, j).sqrt());
            let ak = kernel.strength(dist2(xs, dim, i, k).sqrt());
            for c in 0..dim {
                dx[i * dim + c] += alpha * aj * (xs[j * dim + c] - xs[i * dim + c])
                    + (1.0 - alpha) * ak * (xs[k * dim + c] - xs[i * dim + c]);
            }
        }
    }
}

/// One Newton correction per iteration pushes the state back onto the
/// manifold along the switching-function gradient.
fn project_onto(
    coords: &mut [f64],
    dim: usize,
    m: &ManifoldId,
    radius2: f64,
    control: &StepControl,
) {
    for _ in 0..3 {
        let scale = scale_of(coords);
        let target = 0.01 * theta_band(control, scale);
        let theta = theta_of(coords, dim, m, radius2);
        if theta.abs() <= target {
            return;
        }
        match *m {
            ManifoldId::MetricPair(i, j) => {
                let d2v = dist2(coords, dim, i, j);
                let g2 = 8.0 * d2v;
                if g2 <= 0.0 {
                    return;
                }
                let lam = theta / g2;
                for c in 0..dim {
                    let row = 2.0 * (coords[i * dim + c] - coords[j * dim + c]);
                    coords[i * dim + c] -= lam * row;
                    coords[j * dim + c] += lam * row;
                }
            }
            ManifoldId::TopoTriple { i, j, k } => {
                let mut rows = vec![0.0; 3 * dim];
                let mut g2 = 0.0;
                for c in 0..dim {
                    let rj = 2.0 * (coords[j * dim + c] - coords[i * dim + c]);
                    let rk = -2.0 * (coords[k * dim + c] - coords[i * dim + c]);
                    let ri = -rj - rk;
                    rows[c] = ri;
                    rows[dim + c] = rj;
                    rows[2 * dim + c] = rk;
                    g2 += ri * ri + rj * rj + rk * rk;
                }
                if g2 <= 0.0 {
                    return;
                }
                let lam = theta / g2;
                for c in 0..dim {
                    coords[i * dim + c] -= lam * rows[c];
                    coords[j * dim + c] -= lam * rows[dim + c];
                    coords[k * dim + c] -= lam * rows[2 * dim + c];
                }
            }
        }
    }
}

const ALPHA_SLACK: f64 = 1e-9;

#[allow(clippy::too_many_arguments)]
fn run_slide_segment(
    t_start: f64,
    start: &[f64],
    dim: usize,
    spec: &ModelSpec,
    kernel: &Kernel,
    manifold: &ManifoldId,
    base: &InteractionGraph,
    control: &StepControl,
    t_cap: f64,
    latched: &mut Vec<ManifoldId>,
) -> Result<(Vec<(f64, Vec<f64>)>, SlideEnd)> {
    let n = start.len() / dim;
    let radius2 = match *spec {
        ModelSpec::Metric { radius } => radius * radius,
        ModelSpec::Topological { .. } => 0.0,
    };
    let monitor = Monitor::build(
        spec,
        &FrozenGraph::Sliding {
            manifold: manifold.clone(),
            base: base.clone(),
        },
        n,
    );
    let (skip_agent, extra_targets): (Option<usize>, Vec<usize>) = match *manifold {
        ManifoldId::MetricPair(..) => (None, Vec::new()),
        ManifoldId::TopoTriple { i, j, k } => (Some(i), vec![j, k]),
    };

    let edges = base.edges.clone();
    let kernel_rhs = kernel.clone();
    let m_rhs = manifold.clone();
    let mut rhs = move |xs: &[f64], dx: &mut [f64]| {
        model::graph_rhs(&edges, &kernel_rhs, xs, dim, dx);
        let alpha = slide_alpha_raw(xs, dim, &kernel_rhs, &m_rhs, dx).clamp(0.0, 1.0);
        apply_blend(xs, dim, &kernel_rhs, &m_rhs, alpha, dx);
    };
    let base_edges = base.edges.clone();
    let alpha_probe = |xs: &[f64], buf: &mut Vec<f64>| -> f64 {
        buf.resize(xs.len(), 0.0);
        model::graph_rhs(&base_edges, kernel, xs, dim, buf);
        slide_alpha_raw(xs, dim, kernel, manifold, buf)
    };

    let mut coords = start.to_vec();
    project_onto(&mut coords, dim, manifold, radius2, control);
    let mut samples = vec![(t_start, coords.clone())];

    let mut probe_buf = Vec::new();
    let a0 = alpha_probe(&coords, &mut probe_buf);
    if !(-ALPHA_SLACK..=1.0 + ALPHA_SLACK).contains(&a0) {
        let side = if a0 > 0.5 { 1 } else { -1 };
        return Ok((
            samples,
            SlideEnd::AlphaExit {
                t: t_start,
                state: coords,
                side,
            },
        ));
    }

    let mut prev = coords.clone();
    let mut scratch = Rk4Scratch::default();
    let mut step = 0usize;
    loop {
        let t_now = t_start + step as f64 * control.h;
        let h = (t_cap - t_now).min(control.h);
        if h <= control.h * 1e-12 {
            return Ok((samples, SlideEnd::Cap { state: coords }));
        }
        if step >= control.max_steps {
            return Err(Error::Numeric(format!(
                "step budget exhausted while sliding at t = {t_now}"
            )));
        }
        prev.copy_from_slice(&coords);
        rk4_step_inplace(&mut rhs, &mut coords, h, &mut scratch);
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite state while sliding at t = {}",
                t_now + h
            )));
        }
        project_onto(&mut coords, dim, manifold, radius2, control);

        let scale = scale_of(&coords);
        let band = theta_band(control, scale);
        let escape = 10.0 * band;
        latched.retain(|lm| {
            lm == manifold || monitor.theta(lm, &coords, dim).abs() <= escape
        });

        let alpha_now = alpha_probe(&coords, &mut probe_buf);
        let alpha_out = !(-ALPHA_SLACK..=1.0 + ALPHA_SLACK).contains(&alpha_now);
        let hit = monitor.scan(&coords, dim, band, latched, skip_agent, &extra_targets);
        if alpha_out || hit.is_some() {
            let latched_now = latched.clone();
            let mut vbuf = Vec::new();
            let mut violated = |xs: &[f64]| {
                let a = alpha_probe(xs, &mut vbuf);
                if !(-ALPHA_SLACK..=1.0 + ALPHA_SLACK).contains(&a) {
                    return true;
                }
                let b = theta_band(control, scale_of(xs));
                monitor
                    .scan(xs, dim, b, &latched_now, skip_agent, &extra_targets)
                    .is_some()
            };
            let (t_ev, state_ev) = locate_predicate(
                &mut rhs,
                &mut violated,
                &prev,
                t_now,
                h,
                control,
                &mut scratch,
            );
            let a_ev = alpha_probe(&state_ev, &mut probe_buf);
            samples.push((t_ev, state_ev.clone()));
            if !(-ALPHA_SLACK..=1.0 + ALPHA_SLACK).contains(&a_ev) {
                let side = if a_ev > 0.5 { 1 } else { -1 };
                return Ok((
                    samples,
                    SlideEnd::AlphaExit {
                        t: t_ev,
                        state: state_ev,
                        side,
                    },
                ));
            }
            let b_ev = theta_band(control, scale_of(&state_ev));
            let m2 = monitor
                .scan(&state_ev, dim, b_ev, &latched_now, skip_agent, &extra_targets)
                .ok_or_else(|| {
                    Error::Numeric(format!(
                        "sliding monitor lost its violation near t = {t_ev}"
                    ))
                })?;
            let tie_break = matches!(
                (&m2, manifold),
                (
                    ManifoldId::TopoTriple { i: a, .. },
                    ManifoldId::TopoTriple { i: b, .. }
                ) if a == b
            );
            let end = if tie_break {
                SlideEnd::TieBreak {
                    t: t_ev,
                    state: state_ev,
                    manifold: m2,
                }
            } else {
                SlideEnd::BaseEvent {
                    t: t_ev,
                    state: state_ev,
                    manifold: m2,
                }
            };
            return Ok((samples, end));
        }
        samples.push((t_now + h, coords.clone()));
        step += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn run_branch(
    spec: &ModelSpec,
    kernel: &Kernel,
    control: &StepControl,
    t_final: f64,
    dim: usize,
    p: Pending,
) -> Result<(PiecewiseTrajectory, Option<Fork>)> {
    let mut traj = PiecewiseTrajectory {
        dim,
        initial: (p.t, p.state.clone()),
        segments: Vec::new(),
        events: Vec::new(),
        branch: 0,
    };
    let mut t_cur = p.t;
    let mut state = p.state;
    let mut latched = p.latched;
    let mut mode = p.mode;
    let radius2 = match *spec {
        ModelSpec::Metric { radius } => radius * radius,
        ModelSpec::Topological { .. } => 0.0,
    };

    loop {
        if t_cur >= t_final - 1e-12 * (1.0 + t_final.abs()) {
            return Ok((traj, None));
        }
        mode = match mode {
            Mode::Free { forced } => {
                let cfg = Configuration::new(t_cur, dim, state.clone())?;
                let frozen = match forced {
                    Some(fc) => FrozenGraph::Edges(InteractionGraph {
                        edges: forced_selection_edges(&cfg, spec, &fc),
                    }),
                    None => FrozenGraph::Edges(model::interaction_graph(spec, &cfg)?),
                };
                let (samples, end) = run_frozen_segment(
                    t_cur, &state, dim, spec, kernel, &frozen, control, t_final,
                    &mut latched,
                )?;
                let seg_end = samples.last().expect("segment has samples").0;
                traj.segments.push(Segment {
                    t_start: t_cur,
                    t_end: seg_end,
                    graph: frozen,
                    samples,
                });
                match end {
                    SegmentEnd::Horizon => return Ok((traj, None)),
                    SegmentEnd::Event { t, state: s, manifold } => {
                        if traj.events.len() >= control.max_events {
                            return Err(Error::EventBudget {
                                events: traj.events.len(),
                                t,
                            });
                        }
                        t_cur = t;
                        state = s;
                        let cfg = Configuration::new(t_cur, dim, state.clone())?;
                        let opts = fork_options(
                            &cfg,
                            std::slice::from_ref(&manifold),
                            spec,
                            kernel,
                            true,
                        )?;
                        if opts.is_empty() {
                            return Err(Error::Numeric(format!(
                                "no admissible continuation at {manifold} (t = {t_cur})"
                            )));
                        }
                        if opts.len() > 1 {
                            return Ok((
                                traj,
                                Some(Fork {
                                    t: t_cur,
                                    state,
                                    manifolds: vec![manifold],
                                    options: opts,
                                }),
                            ));
                        }
                        let o = &opts[0];
                        if o.slide {
                            traj.events.push(EventRecord {
                                t: t_cur,
                                manifold: manifold.clone(),
                                class: EventClass::Slide,
                            });
                            if !latched.contains(&manifold) {
                                latched.push(manifold.clone());
                            }
                            Mode::Slide {
                                manifold,
                                exit_time: None,
                            }
                        } else {
                            let class = if o.sigmas[0] > 0 {
                                EventClass::CrossUp
                            } else {
                                EventClass::CrossDown
                            };
                            traj.events.push(EventRecord {
                                t: t_cur,
                                manifold: manifold.clone(),
                                class,
                            });
                            if !latched.contains(&manifold) {
                                latched.push(manifold.clone());
                            }
                            Mode::Free {
                                forced: Some(Forced::from_sigmas(
                                    std::slice::from_ref(&manifold),
                                    &o.sigmas,
                                )),
                            }
                        }
                    }
                }
            }
            Mode::Slide {
                manifold,
                exit_time,
            } => {
                if let Some(et) = exit_time {
                    if et <= t_cur {
                        return Err(Error::Config(format!(
                            "slide exit time {et} is not after the slide start t = {t_cur}"
                        )));
                    }
                }
                let cfg = Configuration::new(t_cur, dim, state.clone())?;
                let base = slide_base(&cfg, spec, &manifold)?;
                let t_cap = exit_time.unwrap_or(t_final).min(t_final);
                let cap_is_exit = exit_time.is_some_and(|et| et < t_final);
                if !latched.contains(&manifold) {
                    latched.push(manifold.clone());
                }
                let (samples, end) = run_slide_segment(
                    t_cur, &state, dim, spec, kernel, &manifold, &base, control, t_cap,
                    &mut latched,
                )?;
                let seg_end = samples.last().expect("segment has samples").0;
                traj.segments.push(Segment {
                    t_start: t_cur,
                    t_end: seg_end,
                    graph: FrozenGraph::Sliding {
                        manifold: manifold.clone(),
                        base,
                    },
                    samples,
                });
                match end {
                    SlideEnd::Cap { state: s } => {
                        if !cap_is_exit {
                            return Ok((traj, None));
                        }
                        t_cur = t_cap;
                        state = s;
                        let cfg = Configuration::new(t_cur, dim, state.clone())?;
                        let opts = fork_options(
                            &cfg,
                            std::slice::from_ref(&manifold),
                            spec,
                            kernel,
                            false,
                        )?;
                        if opts.is_empty() {
                            return Err(Error::Config(format!(
                                "cannot leave {manifold} at the requested exit time {t_cur}: \
                                 no crossing is admissible"
                            )));
                        }
                        return Ok((
                            traj,
                            Some(Fork {
                                t: t_cur,
                                state,
                                manifolds: vec![manifold],
                                options: opts,
                            }),
                        ));
                    }
                    SlideEnd::AlphaExit { t, state: s, side } => {
                        if traj.events.len() >= control.max_events {
                            return Err(Error::EventBudget {
                                events: traj.events.len(),
                                t,
                            });
                        }
                        let class = if side > 0 {
                            EventClass::CrossUp
                        } else {
                            EventClass::CrossDown
                        };
                        traj.events.push(EventRecord {
                            t,
                            manifold: manifold.clone(),
                            class,
                        });
                        t_cur = t;
                        state = s;
                        Mode::Free {
                            forced: Some(Forced::from_sigmas(
                                std::slice::from_ref(&manifold),
                                &[side],
                            )),
                        }
                    }
                    SlideEnd::BaseEvent {
                        t,
                        state: s,
                        manifold: m2,
                    } => {
                        if traj.events.len() >= control.max_events {
                            return Err(Error::EventBudget {
                                events: traj.events.len(),
                                t,
                            });
                        }
                        let theta = theta_of(&s, dim, &m2, radius2);
                        traj.events.push(EventRecord {
                            t,
                            manifold: m2.clone(),
                            class: crossing_class(theta),
                        });
                        if !latched.contains(&m2) {
                            latched.push(m2);
                        }
                        t_cur = t;
                        state = s;
                        Mode::Slide {
                            manifold,
                            exit_time,
                        }
                    }
                    SlideEnd::TieBreak {
                        t,
                        state: s,
                        manifold: m2,
                    } => {
                        if traj.events.len() >= control.max_events {
                            return Err(Error::EventBudget {
                                events: traj.events.len(),
                                t,
                            });
                        }
                        let theta = theta_of(&s, dim, &m2, radius2);
                        traj.events.push(EventRecord {
                            t,
                            manifold: m2.clone(),
                            class: crossing_class(theta),
                        });
                        if !latched.contains(&m2) {
                            latched.push(m2);
                        }
                        t_cur = t;
                        state = s;
                        Mode::Free { forced: None }
                    }
                }
            }
        };
    }
}

/// Explore the set-valued dynamics from `x0`: integrate smooth pieces exactly
/// like the event-driven engine, but at states where several continuations
/// are admissible (ties at the start, or a commanded slide exit) either
/// enumerate all of them or follow the policy's scripted choices. Returns the
/// branch tree in breadth-first order; node 0 is the root.
pub fn simulate_krasovsky(
    x0: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    policy: &BranchPolicy,
    control: &StepControl,
    horizon: f64,
) -> Result<Vec<BranchNode>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    spec.validate(x0.n_agents())?;
    let dim = x0.dim();
    let t_final = x0.t + horizon;
    let mut cursor = 0usize;
    let mut nodes: Vec<BranchNode> = Vec::new();
    let mut queue: VecDeque<Pending> = VecDeque::new();

    let tol_active = control.eps_manifold * (1.0 + x0.scale());
    let active = active_manifolds(x0, spec, tol_active)?;
    if active.is_empty() {
        queue.push_back(Pending {
            parent: None,
            event: None,
            depth: 0,
            t: x0.t,
            state: x0.coords().to_vec(),
            mode: Mode::Free { forced: None },
            latched: Vec::new(),
        });
    } else {
        let opts = fork_options(x0, &active, spec, kernel, active.len() == 1)?;
        nodes.push(BranchNode {
            branch_id: 0,
            parent: None,
            event: None,
            trajectory: PiecewiseTrajectory {
                dim,
                initial: (x0.t, x0.coords().to_vec()),
                segments: Vec::new(),
                events: Vec::new(),
                branch: 0,
            },
        });
        let fork = Fork {
            t: x0.t,
            state: x0.coords().to_vec(),
            manifolds: active,
            options: opts,
        };
        let pendings = expand_fork(&fork, 0, 1, policy, &mut cursor, nodes.len(), 0)?;
        queue.extend(pendings);
    }

    while let Some(p) = queue.pop_front() {
        let id = nodes.len();
        let depth = p.depth;
        let parent = p.parent;
        let event = p.event.clone();
        let (mut traj, fork) = run_branch(spec, kernel, control, t_final, dim, p)?;
        traj.branch = id;
        nodes.push(BranchNode {
            branch_id: id,
            parent,
            event,
            trajectory: traj,
        });
        if let Some(f) = fork {
            let pendings =
                expand_fork(&f, id, depth + 1, policy, &mut cursor, nodes.len(), queue.len())?;
            queue.extend(pendings);
        }
    }
    Ok(nodes)
}

/// Terminal states of the three-agent line family that slides on the outer
/// pair: two agents strictly inside the radius, the second and third exactly
/// at it. Sliding for `exit_time` time units (infinity allowed) and then
/// releasing the boundary pair sends the inner pair to a common point and
/// freezes the third agent; this returns those limits in closed form.
pub fn slide_exit_targets(
    x0: &Configuration,
    kernel: &Kernel,
    radius: f64,
    exit_time: f64,
) -> Result<Vec<f64>> {
    if x0.dim() != 1 || x0.n_agents() != 3 {
        return Err(Error::Unsupported(
            "closed-form slide targets cover three agents on the line".into(),
        ));
    }
    let c = match kernel {
        Kernel::Constant(c) => *c,
        Kernel::AffineSaturated { .. } => {
            return Err(Error::Unsupported(
                "closed-form slide targets need a constant interaction strength".into(),
            ));
        }
    };
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!("radius must be > 0, got {radius}")));
    }
    if exit_time.is_nan() || exit_time < 0.0 {
        return Err(Error::Domain(format!(
            "exit time must be >= 0 (infinity allowed), got {exit_time}"
        )));
    }
    let xs = x0.coords();
    let (x1, x2, x3) = (xs[0], xs[1], xs[2]);
    let tol = 1e-9 * (1.0 + x0.scale());
    let u0 = x2 - x1;
    if !(u0 > 0.0 && u0 < radius) {
        return Err(Error::Precondition(format!(
            "the first gap must lie strictly inside (0, radius), got {u0}"
        )));
    }
    if ((x3 - x2) - radius).abs() > tol {
        return Err(Error::Precondition(format!(
            "the second gap must equal the radius, got {}",
            x3 - x2
        )));
    }
    if x3 - x1 <= radius {
        return Err(Error::Precondition(format!(
            "the outer gap must exceed the radius, got {}",
            x3 - x1
        )));
    }
    let decay = if exit_time.is_infinite() {
        0.0
    } else {
        (-1.5 * c * exit_time).exp()
    };
    let x3_exit = x3 - u0 / 3.0 * (1.0 - decay);
    let merged = 0.5 * (x1 + x2 + x3 - x3_exit);
    Ok(vec![merged, merged, x3_exit])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::StepControl;

    fn metric_spec() -> ModelSpec {
        ModelSpec::metric()
    }

    fn nn_spec() -> ModelSpec {
        ModelSpec::topological(1)
    }

    fn unit_kernel() -> Kernel {
        Kernel::constant(1.0).unwrap()
    }

    fn boundary_metric_state() -> Configuration {
        Configuration::from_scalars(0.0, &[-1.0 / 3.0, 0.0, 1.0]).unwrap()
    }

    fn tied_topological_state() -> Configuration {
        Configuration::from_scalars(0.0, &[0.0, -1.0, 1.0]).unwrap()
    }

    #[test]
    fn manifold_id_canonicalizes_and_displays() {
        assert_eq!(ManifoldId::metric(2, 0), ManifoldId::MetricPair(0, 2));
        assert_eq!(
            ManifoldId::topo(1, 3, 0),
            ManifoldId::TopoTriple { i: 1, j: 0, k: 3 }
        );
        assert_eq!(ManifoldId::metric(1, 2).to_string(), "metric:2-3");
        assert_eq!(ManifoldId::topo(0, 1, 2).to_string(), "topo:1-2/3");
    }

    #[test]
    fn branch_choice_parse_round_trip() {
        for s in ["cross_minus", "cross_plus", "slide", "slide@1.5"] {
            let c: BranchChoice = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert!("slide@-1".parse::<BranchChoice>().is_err());
        assert!("jump".parse::<BranchChoice>().is_err());
    }

    #[test]
    fn active_manifolds_at_boundary_states() {
        let x = boundary_metric_state();
        let found = active_manifolds(&x, &metric_spec(), 1e-9).unwrap();
        assert_eq!(found, vec![ManifoldId::MetricPair(1, 2)]);

        let x = tied_topological_state();
        let found = active_manifolds(&x, &nn_spec(), 1e-9).unwrap();
        assert_eq!(found, vec![ManifoldId::topo(0, 1, 2)]);

        let x = Configuration::from_scalars(0.0, &[-1.0, 0.0, 1.0, 1.0]).unwrap();
        let found = active_manifolds(&x, &nn_spec(), 1e-9).unwrap();
        assert_eq!(
            found,
            vec![ManifoldId::topo(1, 0, 2), ManifoldId::topo(1, 0, 3)]
        );
    }

    #[test]
    fn one_sided_fields_at_the_radius_pair() {
        let x = boundary_metric_state();
        let m = ManifoldId::metric(1, 2);
        let (fm, fp) = one_sided_fields(&x, &m, &metric_spec(), &unit_kernel()).unwrap();
        assert_eq!(fp, vec![1.0 / 3.0, -1.0 / 3.0, 0.0]);
        assert_eq!(fm, vec![1.0 / 3.0, 1.0 - 1.0 / 3.0, -1.0]);
    }

    #[test]
    fn sliding_coefficient_balances_the_normal_components() {
        let x = boundary_metric_state();
        let m = ManifoldId::metric(1, 2);
        let (fm, fp) = one_sided_fields(&x, &m, &metric_spec(), &unit_kernel()).unwrap();
        let alpha = sliding_coefficient(&x, &m, &fm, &fp).unwrap().unwrap();
        assert_eq!(alpha, 1.0 / 6.0);

        let x = tied_topological_state();
        let m = ManifoldId::topo(0, 1, 2);
        let (fm, fp) = one_sided_fields(&x, &m, &nn_spec(), &unit_kernel()).unwrap();
        let alpha = sliding_coefficient(&x, &m, &fm, &fp).unwrap().unwrap();
        assert_eq!(alpha, 0.5);
    }

    #[test]
    fn sliding_coefficient_degenerate_conventions() {
        let x = tied_topological_state();
        let m = ManifoldId::topo(0, 1, 2);
        // tangent and equal: the symmetric weight
        let f = vec![0.0, 1.0, -1.0];
        assert_eq!(sliding_coefficient(&x, &m, &f, &f).unwrap(), Some(0.5));
        // tangent but different: undetermined
        let g = vec![1.0, 1.0, 1.0];
        assert!(matches!(
            sliding_coefficient(&x, &m, &f, &g),
            Err(Error::Numeric(_))
        ));
        // both push the same way: no tangent blend
        let (fm, _) = one_sided_fields(&x, &m, &nn_spec(), &unit_kernel()).unwrap();
        assert_eq!(sliding_coefficient(&x, &m, &fm, &fm).unwrap(), None);
    }

    #[test]
    fn boundary_examples_classify_as_leave() {
        let x = boundary_metric_state();
        let m = ManifoldId::metric(1, 2);
        let class = classify_event(&x, &m, &metric_spec(), &unit_kernel()).unwrap();
        assert_eq!(class, EventClass::Leave);

        let x = tied_topological_state();
        let m = ManifoldId::topo(0, 1, 2);
        let class = classify_event(&x, &m, &nn_spec(), &unit_kernel()).unwrap();
        assert_eq!(class, EventClass::Leave);
    }

    #[test]
    fn approaching_pair_classifies_as_crossing() {
        let x = Configuration::from_scalars(0.0, &[-0.5, 0.0, 0.5]).unwrap();
        let m = ManifoldId::metric(0, 2);
        let class = classify_event(&x, &m, &metric_spec(), &unit_kernel()).unwrap();
        assert_eq!(class, EventClass::CrossDown);
    }

    #[test]
    fn limit_vertices_enumerate_the_central_tie() {
        let x = Configuration::from_scalars(0.0, &[-1.0, 1.0, 0.0, 1.0, -1.0]).unwrap();
        let set = limit_field_vertices(&x, &nn_spec(), &unit_kernel(), 1e-9).unwrap();
        assert_eq!(set.vertices.len(), 2);
        let mut thirds: Vec<f64> = set.vertices.iter().map(|v| v[2]).collect();
        thirds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(thirds, vec![-1.0, 1.0]);
        for v in &set.vertices {
            for (c, val) in v.iter().enumerate() {
                if c != 2 {
                    assert_eq!(*val, 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_membership_matches_the_hull() {
        let x = Configuration::from_scalars(0.0, &[-1.0, 1.0, 0.0, 1.0, -1.0]).unwrap();
        assert!(zero_in_krasovsky(&x, &nn_spec(), &unit_kernel(), 1e-8).unwrap());

        let x = Configuration::from_scalars(0.0, &[0.0, 0.5]).unwrap();
        assert!(!zero_in_krasovsky(&x, &metric_spec(), &unit_kernel(), 1e-8).unwrap());
    }

    #[test]
    fn enumerate_spawns_the_three_boundary_outcomes() {
        let x = boundary_metric_state();
        let control = StepControl::default();
        let nodes = simulate_krasovsky(
            &x,
            &metric_spec(),
            &unit_kernel(),
            &BranchPolicy::default(),
            &control,
            30.0,
        )
        .unwrap();
        assert_eq!(nodes.len(), 4);
        assert!(nodes[0].trajectory.segments.is_empty());
        let expected = [
            vec![-1.0 / 6.0, -1.0 / 6.0, 1.0],
            vec![2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0],
            vec![-1.0 / 9.0, -1.0 / 9.0, 8.0 / 9.0],
        ];
        let mut matched = [false; 3];
        for leaf in leaves(&nodes) {
            let (t, xt) = nodes[leaf].trajectory.terminal();
            assert!((t - 30.0).abs() < 1e-9);
            for (e, hit) in expected.iter().zip(matched.iter_mut()) {
                if e.iter().zip(xt.iter()).all(|(a, b)| (a - b).abs() < 1e-6) {
                    *hit = true;
                }
            }
        }
        assert_eq!(matched, [true, true, true]);
    }

    #[test]
    fn fixed_policy_follows_the_scripted_side() {
        let x = tied_topological_state();
        let control = StepControl::default();
        let kernel = unit_kernel();

        let nodes = simulate_krasovsky(
            &x,
            &nn_spec(),
            &kernel,
            &BranchPolicy::Fixed {
                choices: vec![BranchChoice::CrossPlus],
            },
            &control,
            30.0,
        )
        .unwrap();
        assert_eq!(nodes.len(), 2);
        let (_, xt) = nodes[1].trajectory.terminal();
        for v in xt {
            assert!((v - 0.5).abs() < 1e-6, "plus side ends at 1/2, got {v}");
        }

        let nodes = simulate_krasovsky(
            &x,
            &nn_spec(),
            &kernel,
            &BranchPolicy::Fixed {
                choices: vec![BranchChoice::CrossMinus],
            },
            &control,
            30.0,
        )
        .unwrap();
        let (_, xt) = nodes[1].trajectory.terminal();
        for v in xt {
            assert!((v + 0.5).abs() < 1e-6, "minus side ends at -1/2, got {v}");
        }

        let nodes = simulate_krasovsky(
            &x,
            &nn_spec(),
            &kernel,
            &BranchPolicy::Fixed {
                choices: vec![BranchChoice::Slide { exit_time: None }],
            },
            &control,
            30.0,
        )
        .unwrap();
        let (_, xt) = nodes[1].trajectory.terminal();
        for v in xt {
            assert!(v.abs() < 1e-6, "sliding contracts to the origin, got {v}");
        }
        let seg = &nodes[1].trajectory.segments[0];
        assert!(seg.graph.is_sliding());
        for (_, s) in &seg.samples {
            let theta = theta_of(s, 1, &ManifoldId::topo(0, 1, 2), 0.0);
            assert!(theta.abs() < 1e-9, "slide stays on the tie, theta={theta}");
        }
    }

    #[test]
    fn scripted_slide_exit_matches_the_closed_form() {
        let x = boundary_metric_state();
        let control = StepControl::default();
        let kernel = unit_kernel();
        let nodes = simulate_krasovsky(
            &x,
            &metric_spec(),
            &kernel,
            &BranchPolicy::Fixed {
                choices: vec![BranchChoice::Slide {
                    exit_time: Some(1.5),
                }],
            },
            &control,
            30.0,
        )
        .unwrap();
        // slide piece, then the default release side to the horizon
        assert_eq!(nodes.len(), 3);
        let (t, xt) = nodes[2].trajectory.terminal();
        assert!((t - 30.0).abs() < 1e-9);
        let target = slide_exit_targets(&x, &kernel, 1.0, 1.5).unwrap();
        for (a, b) in xt.iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-6, "terminal {a} vs closed form {b}");
        }
    }

    #[test]
    fn slide_exit_targets_limit_cases() {
        let x = boundary_metric_state();
        let kernel = unit_kernel();
        let at_once = slide_exit_targets(&x, &kernel, 1.0, 0.0).unwrap();
        for (a, b) in at_once.iter().zip([-1.0 / 6.0, -1.0 / 6.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let never = slide_exit_targets(&x, &kernel, 1.0, f64::INFINITY).unwrap();
        for (a, b) in never.iter().zip([-1.0 / 9.0, -1.0 / 9.0, 8.0 / 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = Configuration::from_scalars(0.0, &[0.0, 0.5, 2.0]).unwrap();
        assert!(slide_exit_targets(&bad, &kernel, 1.0, 1.0).is_err());
    }

    #[test]
    fn certificate_accepts_the_sliding_branch() {
        let x = tied_topological_state();
        let control = StepControl::default();
        let kernel = unit_kernel();
        let nodes = simulate_krasovsky(
            &x,
            &nn_spec(),
            &kernel,
            &BranchPolicy::Fixed {
                choices: vec![BranchChoice::Slide { exit_time: None }],
            },
            &control,
            5.0,
        )
        .unwrap();
        let report =
            krasovsky_certificate_trajectory(&nodes[1].trajectory, &nn_spec(), &kernel, 1e-5)
                .unwrap();
        assert_eq!(report.violations, 0, "residual {}", report.max_residual);
        assert!(report.samples_checked >= 100);
    }

    #[test]
    fn certificate_accepts_exact_sliding_samples() {
        // closed form of the nearest-neighbor slide: the outer agents decay
        // toward the fixed center
        let spec = nn_spec();
        let kernel = unit_kernel();
        let mut samples = Vec::new();
        let dt = 1e-4;
        let mut t = 0.1;
        while t <= 0.2 {
            let e = (-t as f64).exp();
            samples.push((t, vec![0.0, -e, e]));
            t += dt;
        }
        let report = krasovsky_certificate(&samples, 1, &spec, &kernel, 1e-6).unwrap();
        assert_eq!(report.violations, 0, "residual {}", report.max_residual);
    }

    #[test]
    fn merging_tie_enumerates_two_joint_resolutions() {
        let x = Configuration::from_scalars(0.0, &[-1.0, 0.0, 1.0, 1.0]).unwrap();
        let control = StepControl::default();
        let nodes = simulate_krasovsky(
            &x,
            &nn_spec(),
            &unit_kernel(),
            &BranchPolicy::default(),
            &control,
            12.0,
        )
        .unwrap();
        assert_eq!(nodes.len(), 3);
        let pair_branch = vec![-0.5, -0.5, 1.0, 1.0];
        let chase_branch = vec![1.0, 1.0, 1.0, 1.0];
        let mut matched = [false; 2];
        for leaf in leaves(&nodes) {
            let (_, xt) = nodes[leaf].trajectory.terminal();
            if pair_branch
                .iter()
                .zip(xt.iter())
                .all(|(a, b)| (a - b).abs() < 1e-3)
            {
                matched[0] = true;
            }
            if chase_branch
                .iter()
                .zip(xt.iter())
                .all(|(a, b)| (a - b).abs() < 1e-3)
            {
                matched[1] = true;
            }
        }
        assert_eq!(matched, [true, true]);
    }

    #[test]
    fn branch_budget_guard_fires() {
        let x = boundary_metric_state();
        let control = StepControl::default();
        let err = simulate_krasovsky(
            &x,
            &metric_spec(),
            &unit_kernel(),
            &BranchPolicy::Enumerate {
                max_branches: 2,
                max_depth: 3,
            },
            &control,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::BranchBudget { .. }));
    }

    #[test]
    fn assembled_branch_spans_the_lineage() {
        let x = boundary_metric_state();
        let control = StepControl::default();
        let nodes = simulate_krasovsky(
            &x,
            &metric_spec(),
            &unit_kernel(),
            &BranchPolicy::default(),
            &control,
            2.0,
        )
        .unwrap();
        let leaf = leaves(&nodes)[0];
        let full = assemble_branch(&nodes, leaf).unwrap();
        assert_eq!(full.t_start(), 0.0);
        assert!((full.t_end() - 2.0).abs() < 1e-9);
        assert_eq!(full.initial.1, x.coords().to_vec());
        assert!(!full.events.is_empty(), "the fork choice is recorded");
        assert_eq!(full.events[0].t, 0.0);
        assert_eq!(full.branch, leaf);
    }
}
