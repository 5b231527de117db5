use crate::config::Configuration;
use crate::error::Error;
use crate::kernel::Kernel;
use crate::model::InteractionGraph;
use crate::Result;

/// Total single-neighbor assignment `i -> gamma(i)` for the nearest-neighbor
/// rule, built so the frozen dynamics stays valid on a forward time interval.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaGraph {
    gamma: Vec<usize>,
}

impl GammaGraph {
    pub fn neighbor(&self, i: usize) -> usize {
        self.gamma[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.gamma
    }

    pub fn n_agents(&self) -> usize {
        self.gamma.len()
    }

    pub fn edges(&self) -> InteractionGraph {
        InteractionGraph {
            edges: self.gamma.iter().enumerate().map(|(i, &j)| (i, j)).collect(),
        }
    }
}

/// Relative scale under which two candidate neighbors count as coincident.
pub(crate) fn coincidence_tol(x: &Configuration) -> f64 {
    1e-12 * (1.0 + x.scale())
}

/// Nearest-neighbor candidate set `A_i`: minimizers of the distance to `i`
/// under exact floating comparison.
fn argmin_set(x: &Configuration, i: usize) -> Vec<usize> {
    let n = x.n_agents();
    let mut d_min = f64::INFINITY;
    for j in 0..n {
        if j != i {
            d_min = d_min.min(x.dist2(i, j));
        }
    }
    (0..n).filter(|&j| j != i && x.dist2(i, j) == d_min).collect()
}

/// Selection score for assigning `gamma(i) = l` when `l` already has its own
/// neighbor: the component of `l`'s frozen velocity relative to `i`'s pull,
/// along the direction from `i` to `l`. Smaller means `l` runs away from `i`
/// more slowly, keeping the assignment valid forward in time.
pub fn psi(
    x: &Configuration,
    kernel: &Kernel,
    gamma: &[Option<usize>],
    i: usize,
    l: usize,
) -> Result<f64> {
    let gl = gamma
        .get(l)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Precondition(format!("psi needs gamma({}) assigned", l + 1)))?;
    let dim = x.dim();
    let xi = x.agent(i);
    let xl = x.agent(l);
    let xgl = x.agent(gl);
    let d_l_gl = x.dist(l, gl);
    let d_i_l = x.dist(i, l);
    let a_l = kernel.strength(d_l_gl);
    let a_i = kernel.strength(d_i_l);
    let mut acc = 0.0;
    for c in 0..dim {
        let dir = xl[c] - xi[c];
        let vel_l = a_l * (xgl[c] - xl[c]);
        let pull_i = a_i * (xl[c] - xi[c]);
        acc += dir * (vel_l - pull_i);
    }
    Ok(acc)
}

/// Build the total assignment in three passes.
///
/// 1. Agents whose nearest neighbor is unique get it outright.
/// 2. Unassigned pairs that are mutually nearest are paired, scanning lowest
///    index first.
/// 3. Remaining agents pick, among their nearest-neighbor candidates that
///    already carry an assignment, the candidate with minimal [`psi`]; ties
///    go to the lower index. Passes repeat until everyone is assigned.
pub fn build_gamma(x: &Configuration, kernel: &Kernel) -> Result<GammaGraph> {
    let n = x.n_agents();
    if n < 2 {
        return Err(Error::Config("need at least 2 agents".into()));
    }
    let candidates: Vec<Vec<usize>> = (0..n).map(|i| argmin_set(x, i)).collect();
    let mut gamma: Vec<Option<usize>> = vec![None; n];

    // Step 1: unique nearest neighbor
    for i in 0..n {
        if candidates[i].len() == 1 {
            gamma[i] = Some(candidates[i][0]);
        }
    }

    // Step 2: mutually-nearest unassigned pairs, lowest indices first
    loop {
        let mut paired = false;
        'scan: for i in 0..n {
            if gamma[i].is_some() {
                continue;
            }
            for &j in &candidates[i] {
                if j > i && gamma[j].is_none() && candidates[j].contains(&i) {
                    gamma[i] = Some(j);
                    gamma[j] = Some(i);
                    paired = true;
                    break 'scan;
                }
            }
        }
        if !paired {
            break;
        }
    }

    // Step 3: score candidates that already have an assignment
    loop {
        let mut progressed = false;
        for i in 0..n {
            if gamma[i].is_some() {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for &j in &candidates[i] {
                if gamma[j].is_none() {
                    continue;
                }
                let score = psi(x, kernel, &gamma, i, j)?;
                let better = match best {
                    None => true,
                    Some((s, idx)) => score < s || (score == s && j < idx),
                };
                if better {
                    best = Some((score, j));
                }
            }
            if let Some((_, j)) = best {
                gamma[i] = Some(j);
                progressed = true;
            }
        }
        if gamma.iter().all(|g| g.is_some()) {
            break;
        }
        if !progressed {
            return Err(Error::Numeric(
                "single-neighbor assignment stalled with unassigned agents".into(),
            ));
        }
    }

    Ok(GammaGraph {
        gamma: gamma.into_iter().map(|g| g.expect("total")).collect(),
    })
}

/// Frozen right-hand side: each agent chases only its assigned neighbor.
pub fn carath_rhs(x: &Configuration, kernel: &Kernel, gamma: &GammaGraph) -> Vec<f64> {
    let dim = x.dim();
    let mut out = vec![0.0; x.coords().len()];
    for i in 0..x.n_agents() {
        let j = gamma.neighbor(i);
        let a = kernel.strength(x.dist(i, j));
        for c in 0..dim {
            out[i * dim + c] = a * (x.agent(j)[c] - x.agent(i)[c]);
        }
    }
    out
}

/// How far the assignment is from being invalidated: the smallest slack
/// `|x_k - x_i| - |x_gamma(i) - x_i|` over agents `i` and competitors `k`.
///
/// Competitors coincident with the assigned neighbor are skipped; swapping
/// them changes nothing about the dynamics. Nonnegative means every
/// `gamma(i)` still realizes a nearest neighbor.
pub fn validity_margin(x: &Configuration, gamma: &GammaGraph) -> f64 {
    let n = x.n_agents();
    let tol = coincidence_tol(x);
    let mut margin = f64::INFINITY;
    for i in 0..n {
        let g = gamma.neighbor(i);
        let d_assigned = x.dist(i, g);
        for k in 0..n {
            if k == i || k == g {
                continue;
            }
            if x.dist(k, g) <= tol {
                continue;
            }
            margin = margin.min(x.dist(i, k) - d_assigned);
        }
    }
    margin
}
