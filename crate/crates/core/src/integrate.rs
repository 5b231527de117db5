use crate::config::Configuration;
use crate::error::Error;
use crate::kernel::Kernel;
use crate::model::{self, ModelSpec};
use crate::Result;

/// Step-size and tolerance knobs shared by the fixed-step integrators.
#[derive(Clone, Debug)]
pub struct StepControl {
    /// nominal RK4 step
    pub h: f64,
    /// relative half-width for event-time bisection
    pub eps_event: f64,
    /// relative band for declaring a state on a switching manifold
    pub eps_manifold: f64,
    /// hard cap on detected events per run
    pub max_events: usize,
    /// hard cap on integration steps per run
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            h: 1e-3,
            eps_event: 1e-10,
            eps_manifold: 1e-9,
            max_events: 10_000,
            max_steps: 50_000_000,
        }
    }
}

impl StepControl {
    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// absolute event-bracketing width at time `t`
    pub fn event_window(&self, t: f64) -> f64 {
        self.eps_event * (1.0 + t.abs())
    }

    /// absolute manifold band at state scale `s`
    pub fn manifold_band(&self, s: f64) -> f64 {
        self.eps_manifold * (1.0 + s)
    }
}

/// Sampled solution of a single smooth run: `(t, coords)` rows plus the times
/// where the interaction graph changed.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<(f64, Vec<f64>)>,
    pub events: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &(f64, Vec<f64>) {
        self.samples.last().expect("trajectory has samples")
    }
}

/// One classical RK4 step of `dx/dt = rhs(x)` with step `h`, in place.
pub(crate) fn rk4_step_inplace<F>(rhs: &mut F, x: &mut [f64], h: f64, scratch: &mut Rk4Scratch)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    scratch.resize(n);
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;

    rhs(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    rhs(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    rhs(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    rhs(tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[derive(Default)]
pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            v.resize(n, 0.0);
        }
    }
}

/// One classical RK4 step for an autonomous field. Returns the new state.
pub fn rk4_step<F>(mut rhs: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut out = x.to_vec();
    let mut scratch = Rk4Scratch::default();
    rk4_step_inplace(&mut rhs, &mut out, h, &mut scratch);
    out
}

/// Bisect a sign change of `switch_fn` along the segment from `x_lo` (at
/// `t_lo`) to the RK4 image at `t_hi = t_lo + h`, re-stepping from `x_lo`
/// each probe. Needs opposite signs at the ends; stops when the bracket is
/// narrower than `control.event_window`. Returns `(t_event, state_at_t_hi_side)`.
pub fn locate_event<F, G>(
    mut rhs: F,
    mut switch_fn: G,
    x_lo: &[f64],
    t_lo: f64,
    h: f64,
    control: &StepControl,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&[f64], &mut [f64]),
    G: FnMut(&[f64]) -> f64,
{
    let s_lo = switch_fn(x_lo);
    let mut scratch = Rk4Scratch::default();
    let step_to = |dt: f64, scratch: &mut Rk4Scratch, rhs: &mut F| {
        let mut y = x_lo.to_vec();
        if dt > 0.0 {
            rk4_step_inplace(rhs, &mut y, dt, scratch);
        }
        y
    };
    let x_hi = step_to(h, &mut scratch, &mut rhs);
    let s_hi = switch_fn(&x_hi);
    if s_lo == 0.0 {
        return Ok((t_lo, x_lo.to_vec()));
    }
    if s_lo.signum() == s_hi.signum() && s_hi != 0.0 {
        return Err(Error::Precondition(
            "locate_event needs a sign change across the step".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = h;
    while hi - lo > control.event_window(t_lo + lo) {
        let mid = 0.5 * (lo + hi);
        let y = step_to(mid, &mut scratch, &mut rhs);
        let s = switch_fn(&y);
        if s == 0.0 || s.signum() != s_lo.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let state = step_to(hi, &mut scratch, &mut rhs);
    Ok((t_lo + hi, state))
}

/// Bisection on a boolean violation predicate: `false` at offset 0, `true`
/// at offset `h`. Returns `(t_event, state)` at the violated end of the final
/// bracket so the caller resumes past the trigger.
pub(crate) fn locate_predicate<F, P>(
    rhs: &mut F,
    violated: &mut P,
    x_lo: &[f64],
    t_lo: f64,
    h: f64,
    control: &StepControl,
    scratch: &mut Rk4Scratch,
) -> (f64, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64]) -> bool,
{
    let mut lo = 0.0;
    let mut hi = h;
    let mut state_hi: Option<Vec<f64>> = None;
    while hi - lo > control.event_window(t_lo + lo) {
        let mid = 0.5 * (lo + hi);
        let mut y = x_lo.to_vec();
        rk4_step_inplace(rhs, &mut y, mid, scratch);
        if violated(&y) {
            hi = mid;
            state_hi = Some(y);
        } else {
            lo = mid;
        }
    }
    let state = state_hi.unwrap_or_else(|| {
        let mut y = x_lo.to_vec();
        rk4_step_inplace(rhs, &mut y, hi, scratch);
        y
    });
    (t_lo + hi, state)
}

/// Exact flow of the frozen linear system `dx/dt = c (A - D) x` given the
/// interaction edges, valid only for a constant kernel. Uses a
/// scaling-and-squaring Taylor matrix exponential on the agent-coupling
/// matrix, applied per coordinate.
pub fn propagate_linear_exact(
    x: &Configuration,
    kernel: &Kernel,
    edges: &[(usize, usize)],
    dt: f64,
) -> Result<Configuration> {
    let c = match *kernel {
        Kernel::Constant(c) => c,
        _ => {
            return Err(Error::Unsupported(
                "exact linear propagation needs a constant kernel".into(),
            ))
        }
    };
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::Domain(format!("dt must be finite and >= 0, got {dt}")));
    }
    let n = x.n_agents();
    let dim = x.dim();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::Config("edge index out of range".into()));
        }
        m[(i, j)] += c;
        m[(i, i)] -= c;
    }
    let e = expm(&(m * dt));
    let mut coords = vec![0.0; n * dim];
    for c_idx in 0..dim {
        let col = nalgebra::DVector::from_iterator(
            n,
            (0..n).map(|i| x.agent(i)[c_idx]),
        );
        let new = &e * col;
        for i in 0..n {
            coords[i * dim + c_idx] = new[i];
        }
    }
    Ok(x.with_state(x.t + dt, coords))
}

/// Scaling-and-squaring Taylor series exponential. The coupling matrices here
/// are small and have norm bounded by twice the total edge weight, so a plain
/// series after halving is accurate to machine precision.
fn expm(m: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax() * n as f64;
    let mut squarings = 0u32;
    let mut scaled = m.clone();
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
        scaled /= 2f64.powi(squarings as i32);
    }
    let mut result = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut term = nalgebra::DMatrix::<f64>::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Reference integrator: explicit Euler on the pointwise field with a very
/// small step, recomputing the neighbor sets every step. Slow by design; used
/// to cross-check the event-handling engines. Samples are decimated to about
/// one per `10^3` steps and graph-change times are recorded.
pub fn euler_oracle(
    x0: &Configuration,
    spec: &ModelSpec,
    kernel: &Kernel,
    t_max: f64,
    h: f64,
) -> Result<Trajectory> {
    if h > 1e-4 {
        return Err(Error::Precondition(format!(
            "oracle step must be <= 1e-4, got {h}"
        )));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Domain(format!("t_max must be positive, got {t_max}")));
    }
    spec.validate(x0.n_agents())?;
    let n_steps = (t_max / h).ceil() as usize;
    let decimate = (n_steps / 1000).max(1);
    let x = x0.clone();
    let mut coords = x.coords().to_vec();
    let mut graph = model::interaction_graph(spec, &x)?;
    let mut samples = vec![(x.t, coords.clone())];
    let mut events = Vec::new();
    let mut rhs = vec![0.0; coords.len()];
    for step in 0..n_steps {
        let h_now = (t_max - step as f64 * h).min(h);
        model::graph_rhs(&graph.edges, kernel, &coords, x.dim(), &mut rhs);
        for (c, r) in coords.iter_mut().zip(rhs.iter()) {
            *c += h_now * r;
        }
        let t_now = x.t + step as f64 * h + h_now;
        let probe = x.with_state(t_now, coords.clone());
        let new_graph = model::interaction_graph(spec, &probe)?;
        if new_graph.edges != graph.edges {
            events.push(t_now);
            graph = new_graph;
        }
        if (step + 1) % decimate == 0 || step + 1 == n_steps {
            samples.push((t_now, coords.clone()));
        }
    }
    Ok(Trajectory { samples, events })
}
