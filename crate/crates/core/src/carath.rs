use crate::config::{dist2, scale_of, Configuration};
use crate::error::Error;
use crate::gamma::{self, GammaGraph};
use crate::integrate::{locate_predicate, rk4_step_inplace, Rk4Scratch, StepControl};
use crate::kernel::Kernel;
use crate::krasov::{EventClass, ManifoldId};
use crate::model::{self, InteractionGraph, ModelSpec};
use crate::Result;

/// Interaction structure held fixed while integrating one smooth segment.
#[derive(Clone, Debug)]
pub enum FrozenGraph {
    /// explicit edge set (metric graph, or a topological selection)
    Edges(InteractionGraph),
    /// single-neighbor assignment from the nearest-neighbor construction
    Gamma(GammaGraph),
    /// motion confined to one switching manifold; `base` holds every
    /// interaction not involved in the blended pair or triple
    Sliding {
        manifold: ManifoldId,
        base: InteractionGraph,
    },
}

impl FrozenGraph {
    /// edges that generate the segment field; for sliding segments only the
    /// unblended part
    pub fn base_edges(&self) -> Vec<(usize, usize)> {
        match self {
            FrozenGraph::Edges(g) => g.edges.clone(),
            FrozenGraph::Gamma(g) => g.edges().edges,
            FrozenGraph::Sliding { base, .. } => base.edges.clone(),
        }
    }

    pub fn is_sliding(&self) -> bool {
        matches!(self, FrozenGraph::Sliding { .. })
    }
}

/// Topology-change record along a trajectory.
#[derive(Clone, Debug)]
pub struct EventRecord {
    pub t: f64,
    pub manifold: ManifoldId,
    pub class: EventClass,
}

/// One smooth piece of a solution: a time interval, the frozen interaction
/// structure, and dense samples including both endpoints.
#[derive(Clone, Debug)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub graph: FrozenGraph,
    pub samples: Vec<(f64, Vec<f64>)>,
}

/// Piecewise-smooth solution assembled from abutting segments.
#[derive(Clone, Debug)]
pub struct PiecewiseTrajectory {
    pub dim: usize,
    pub initial: (f64, Vec<f64>),
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
    /// branch identifier assigned by the enumerating engine; 0 for a single run
    pub branch: usize,
}

impl PiecewiseTrajectory {
    pub fn n_agents(&self) -> usize {
        self.initial.1.len() / self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.initial.0
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.initial.0, |s| s.t_end)
    }

    pub fn terminal(&self) -> (f64, &[f64]) {
        match self.segments.last() {
            Some(s) => {
                let (t, x) = s.samples.last().expect("segment has samples");
                (*t, x.as_slice())
            }
            None => (self.initial.0, self.initial.1.as_slice()),
        }
    }

    pub fn terminal_configuration(&self) -> Configuration {
        let (t, x) = self.terminal();
        Configuration::new(t, self.dim, x.to_vec()).expect("terminal state is valid")
    }

    /// Visit every sample in time order, skipping the duplicated states at
    /// segment joints.
    pub fn each_sample<F: FnMut(f64, &[f64])>(&self, mut f: F) {
        if self.segments.is_empty() {
            f(self.initial.0, &self.initial.1);
            return;
        }
        for (si, seg) in self.segments.iter().enumerate() {
            let skip = usize::from(si > 0);
            for (t, x) in seg.samples.iter().skip(skip) {
                f(*t, x);
            }
        }
    }

    pub fn flat_samples(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        self.each_sample(|t, x| out.push((t, x.to_vec())));
        out
    }

    /// Linear interpolation between stored samples.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        if t < self.t_start() - 1e-12 || t > self.t_end() + 1e-12 {
            return Err(Error::Domain(format!(
                "time {t} outside trajectory range [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        if self.segments.is_empty() {
            return Ok(self.initial.1.clone());
        }
        let seg = self
            .segments
            .iter()
            .find(|s| t <= s.t_end + 1e-12)
            .unwrap_or_else(|| self.segments.last().unwrap());
        let samples = &seg.samples;
        let idx = samples.partition_point(|(ts, _)| *ts < t);
        if idx == 0 {
            return Ok(samples[0].1.clone());
        }
        if idx >= samples.len() {
            return Ok(samples.last().unwrap().1.clone());
        }
        let (t0, x0) = &samples[idx - 1];
        let (t1, x1) = &samples[idx];
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Ok(x0
            .iter()
            .zip(x1.iter())
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }

    pub fn configuration_at(&self, t: f64) -> Result<Configuration> {
        Configuration::new(t, self.dim, self.state_at(t)?)
    }

    /// Concatenate a continuation produced from this trajectory's terminal state.
    pub fn extend_with(&mut self, mut tail: PiecewiseTrajectory) {
        self.segments.append(&mut tail.segments);
        self.events.append(&mut tail.events);
    }
}

/// Outcome of `verify_caratheodory` and of the inclusion certificate: the
/// worst finite-difference residual over checked samples.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub violations: usize,
    pub samples_checked: usize,
}

/// coincidence threshold in squared-distance form at a given coordinate scale
pub(crate) fn coincide_tol2(scale: f64) -> f64 {
    let tol = 1e-12 * (1.0 + scale);
    tol * tol
}

/// band in squared-distance units for manifold bookkeeping
pub(crate) fn theta_band(control: &StepControl, scale: f64) -> f64 {
    control.eps_manifold * (1.0 + scale * scale)
}

/// Monitoring tables derived from a frozen graph: which side of every
/// switching function the segment is supposed to stay on.
pub(crate) enum Monitor {
    Metric { on: Vec<bool>, radius2: f64 },
    Topo { sets: Vec<Vec<usize>> },
}

impl Monitor {
    pub(crate) fn build(spec: &ModelSpec, frozen: &FrozenGraph, n: usize) -> Monitor {
        match spec {
            ModelSpec::Metric { radius } => {
                let mut on = vec![false; n * n];
                let edges = frozen.base_edges();
                for &(i, j) in &edges {
                    on[i * n + j] = true;
                    on[j * n + i] = true;
                }
                Monitor::Metric {
                    on,
                    radius2: radius * radius,
                }
            }
            ModelSpec::Topological { .. } => {
                let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n];
                match frozen {
                    FrozenGraph::Edges(g) => {
                        for &(i, j) in &g.edges {
                            sets[i].push(j);
                        }
                    }
                    FrozenGraph::Gamma(g) => {
                        for i in 0..n {
                            sets[i].push(g.neighbor(i));
                        }
                    }
                    FrozenGraph::Sliding { base, .. } => {
                        for &(i, j) in &base.edges {
                            sets[i].push(j);
                        }
                    }
                }
                Monitor::Topo { sets }
            }
        }
    }

    /// agents whose neighbor checks are suppressed (the blended agent of a
    /// sliding segment handles its own tie separately)
    pub(crate) fn theta(&self, m: &ManifoldId, coords: &[f64], dim: usize) -> f64 {
        match *m {
            ManifoldId::MetricPair(i, j) => {
                let r2 = match self {
                    Monitor::Metric { radius2, .. } => *radius2,
                    Monitor::Topo { .. } => 0.0,
                };
                dist2(coords, dim, i, j) - r2
            }
            ManifoldId::TopoTriple { i, j, k } => {
                dist2(coords, dim, i, j) - dist2(coords, dim, i, k)
            }
        }
    }

    /// First switching function caught strictly on the wrong side, or, with a
    /// positive `shift`, beyond the tolerated noise band. Latched manifolds
    /// and coincident-target swaps are skipped.
    pub(crate) fn scan(
        &self,
        coords: &[f64],
        dim: usize,
        shift: f64,
        latched: &[ManifoldId],
        skip_agent: Option<usize>,
        extra_targets: &[usize],
    ) -> Option<ManifoldId> {
        let scale = scale_of(coords);
        let tolc2 = coincide_tol2(scale);
        match self {
            Monitor::Metric { on, radius2 } => {
                let n = coords.len() / dim;
                for i in 0..n {
                    for j in (i + 1)..n {
                        let m = ManifoldId::MetricPair(i, j);
                        if latched.contains(&m) {
                            continue;
                        }
                        let theta = dist2(coords, dim, i, j) - radius2;
                        let active = on[i * n + j];
                        if (active && theta > shift) || (!active && theta < -shift) {
                            return Some(m);
                        }
                    }
                }
                None
            }
            Monitor::Topo { sets } => {
                let n = coords.len() / dim;
                for i in 0..n {
                    let targets: &[usize] = if Some(i) == skip_agent {
                        extra_targets
                    } else {
                        &sets[i]
                    };
                    if Some(i) == skip_agent {
                        // the blended agent must keep its tied pair nearest;
                        // any outsider overtaking both ends the slide
                        let d_tie = targets
                            .iter()
                            .map(|&j| dist2(coords, dim, i, j))
                            .fold(f64::INFINITY, f64::min);
                        for k in 0..n {
                            if k == i || targets.contains(&k) {
                                continue;
                            }
                            let dk = dist2(coords, dim, i, k);
                            if dk < d_tie - shift {
                                let coincident = targets
                                    .iter()
                                    .any(|&j| dist2(coords, dim, k, j) <= tolc2);
                                if coincident {
                                    continue;
                                }
                                let j = targets[0];
                                return Some(ManifoldId::topo(i, j.min(k), j.max(k)));
                            }
                        }
                        continue;
                    }
                    for &j in targets {
                        let dj = dist2(coords, dim, i, j);
                        for k in 0..n {
                            if k == i || targets.contains(&k) {
                                continue;
                            }
                            let dk = dist2(coords, dim, i, k);
                            if dk < dj - shift {
                                if dist2(coords, dim, k, j) <= tolc2 {
                                    continue;
                                }
                                let m = ManifoldId::topo(i, j.min(k), j.max(k));
                                if latched.contains(&m) {
                                    continue;
                                }
                                return Some(m);
                            }
                        }
                    }
                }
                None
            }
        }
    }
}

/// Where a frozen-segment run stopped.
pub(crate) enum SegmentEnd {
    Horizon,
    Event { t: f64, state: Vec<f64>, manifold: ManifoldId },
}

/// Integrate one frozen-graph segment until the horizon or the first
/// violation of the frozen interaction structure. Returns the dense samples
/// (endpoints included) and how the segment ended. `latched` manifolds are
/// exempt from monitoring until the state moves decisively away from them.
pub(crate) fn run_frozen_segment(
    t_start: f64,
    start: &[f64],
    dim: usize,
    spec: &ModelSpec,
    kernel: &Kernel,
    frozen: &FrozenGraph,
    control: &StepControl,
    t_end: f64,
    latched: &mut Vec<ManifoldId>,
) -> Result<(Vec<(f64, Vec<f64>)>, SegmentEnd)> {
    let edges = frozen.base_edges();
    let monitor = Monitor::build(spec, frozen, start.len() / dim);
    let kernel_c = kernel.clone();
    let mut rhs = move |x: &[f64], dx: &mut [f64]| {
        model::graph_rhs(&edges, &kernel_c, x, dim, dx);
    };

    let mut samples = vec![(t_start, start.to_vec())];
    let mut coords = start.to_vec();
    let mut prev = coords.clone();
    let mut scratch = Rk4Scratch::default();
    let mut step = 0usize;
    loop {
        let t_now = t_start + step as f64 * control.h;
        let h = (t_end - t_now).min(control.h);
        if h <= control.h * 1e-12 {
            return Ok((samples, SegmentEnd::Horizon));
        }
        if step >= control.max_steps {
            return Err(Error::Numeric(format!(
                "step budget exhausted at t = {t_now}"
            )));
        }
        prev.copy_from_slice(&coords);
        rk4_step_inplace(&mut rhs, &mut coords, h, &mut scratch);
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite state at t = {}",
                t_now + h
            )));
        }
        let scale = scale_of(&coords);
        let escape = 10.0 * theta_band(control, scale);
        latched.retain(|m| monitor.theta(m, &coords, dim).abs() <= escape);
        if let Some(_m) = monitor.scan(&coords, dim, 0.0, latched, None, &[]) {
            let latched_now = latched.clone();
            let mut violated = |x: &[f64]| {
                monitor.scan(x, dim, 0.0, &latched_now, None, &[]).is_some()
            };
            let (t_ev, state) =
                locate_predicate(&mut rhs, &mut violated, &prev, t_now, h, control, &mut scratch);
            let manifold = monitor
                .scan(&state, dim, 0.0, &latched_now, None, &[])
                .expect("violated state identifies a manifold");
            samples.push((t_ev, state.clone()));
            return Ok((samples, SegmentEnd::Event { t: t_ev, state, manifold }));
        }
        samples.push((t_now + h, coords.clone()));
        step += 1;
    }
}

/// Freeze the interaction structure given by the exact pointwise rule at `x`.
pub(crate) fn freeze_strict(
    x: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
) -> Result<FrozenGraph> {
    match spec {
        ModelSpec::Metric { .. } => Ok(FrozenGraph::Edges(model::interaction_graph(spec, x)?)),
        ModelSpec::Topological { kappa } => {
            if *kappa == 1 {
                Ok(FrozenGraph::Gamma(gamma::build_gamma(x, kernel)?))
            } else {
                Ok(FrozenGraph::Edges(model::interaction_graph(spec, x)?))
            }
        }
    }
}

/// crossing direction implied by the side of the manifold the state landed on
pub(crate) fn crossing_class(theta_after: f64) -> EventClass {
    if theta_after > 0.0 {
        EventClass::CrossUp
    } else {
        EventClass::CrossDown
    }
}

/// Event-driven piecewise integration of the exact dynamics: the interaction
/// structure is frozen per segment (metric graph, nearest-neighbor
/// assignment, or pointwise topological selection), events are located by
/// bisection when the frozen structure stops matching the pointwise rule, and
/// the structure is rebuilt at each event.
pub fn simulate_caratheodory(
    x0: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    control: &StepControl,
    horizon: f64,
) -> Result<PiecewiseTrajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    spec.validate(x0.n_agents())?;
    let dim = x0.dim();
    let t_final = x0.t + horizon;
    let mut traj = PiecewiseTrajectory {
        dim,
        initial: (x0.t, x0.coords().to_vec()),
        segments: Vec::new(),
        events: Vec::new(),
        branch: 0,
    };
    let mut state = x0.clone();
    let mut latched: Vec<ManifoldId> = Vec::new();
    loop {
        let frozen = freeze_strict(&state, spec, kernel)?;
        let monitor = Monitor::build(spec, &frozen, x0.n_agents());
        let (samples, end) = run_frozen_segment(
            state.t,
            state.coords(),
            dim,
            spec,
            kernel,
            &frozen,
            control,
            t_final,
            &mut latched,
        )?;
        let t_seg_end = samples.last().expect("samples").0;
        traj.segments.push(Segment {
            t_start: state.t,
            t_end: t_seg_end,
            graph: frozen,
            samples,
        });
        match end {
            SegmentEnd::Horizon => return Ok(traj),
            SegmentEnd::Event { t, state: s, manifold } => {
                if traj.events.len() >= control.max_events {
                    return Err(Error::EventBudget {
                        events: traj.events.len(),
                        t,
                    });
                }
                let theta = monitor.theta(&manifold, &s, dim);
                traj.events.push(EventRecord {
                    t,
                    manifold: manifold.clone(),
                    class: crossing_class(theta),
                });
                latched.push(manifold);
                state = state.with_state(t, s);
            }
        }
    }
}

/// true when `x` lies within `band` (in squared-distance units) of a
/// switching surface that actually changes the field there
pub(crate) fn near_discontinuity(x: &Configuration, spec: &ModelSpec, band: f64) -> bool {
    let n = x.n_agents();
    let tolc2 = coincide_tol2(x.scale());
    match spec {
        ModelSpec::Metric { radius } => {
            let r2 = radius * radius;
            for i in 0..n {
                for j in (i + 1)..n {
                    if (x.dist2(i, j) - r2).abs() <= band {
                        return true;
                    }
                }
            }
            false
        }
        ModelSpec::Topological { kappa } => {
            for i in 0..n {
                let mut order: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (x.dist2(i, j), j))
                    .collect();
                order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                for a in 0..*kappa {
                    for b in *kappa..order.len() {
                        if (order[a].0 - order[b].0).abs() <= band
                            && x.dist2(order[a].1, order[b].1) > tolc2
                        {
                            return true;
                        }
                    }
                }
            }
            false
        }
    }
}

/// Check dense samples of a claimed solution against the exact pointwise
/// field: centered finite differences at interior samples, skipping states
/// within a small band of any field-changing switching surface. Certifies
/// externally supplied closed forms.
pub fn verify_caratheodory(
    samples: &[(f64, Vec<f64>)],
    dim: usize,
    spec: &ModelSpec,
    kernel: &Kernel,
    tol: f64,
) -> Result<ResidualReport> {
    if samples.len() < 3 {
        return Err(Error::Precondition(
            "verification needs at least 3 samples".into(),
        ));
    }
    let mut report = ResidualReport {
        max_residual: 0.0,
        violations: 0,
        samples_checked: 0,
    };
    for w in samples.windows(3) {
        let (t0, x0) = (&w[0].0, &w[0].1);
        let (t1, x1) = (&w[1].0, &w[1].1);
        let (t2, x2) = (&w[2].0, &w[2].1);
        let cfg = Configuration::new(*t1, dim, x1.clone())?;
        let band = 1e-9 * (1.0 + cfg.scale() * cfg.scale());
        if near_discontinuity(&cfg, spec, band) {
            continue;
        }
        let field = model::vector_field(spec, kernel, &cfg)?;
        let dt = t2 - t0;
        if dt <= 0.0 {
            return Err(Error::Precondition("sample times must increase".into()));
        }
        let mut residual = 0.0f64;
        for c in 0..x0.len() {
            let fd = (x2[c] - x0[c]) / dt;
            residual = residual.max((fd - field[c]).abs());
        }
        report.samples_checked += 1;
        report.max_residual = report.max_residual.max(residual);
        if residual > tol {
            report.violations += 1;
        }
    }
    Ok(report)
}
