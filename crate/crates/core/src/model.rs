use serde::{Deserialize, Serialize};

use crate::config::{dist2, Configuration};
use crate::error::Error;
use crate::kernel::Kernel;
use crate::Result;

/// Which neighbor rule drives the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Agents strictly closer than `radius` interact.
    Metric { radius: f64 },
    /// Each agent follows its `kappa` nearest agents, ties to the lower index.
    Topological { kappa: usize },
}

impl ModelSpec {
    /// Metric rule with the standard unit radius.
    pub fn metric() -> Self {
        ModelSpec::Metric { radius: 1.0 }
    }

    pub fn topological(kappa: usize) -> Self {
        ModelSpec::Topological { kappa }
    }

    /// Check the parameters against an agent count.
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        match *self {
            ModelSpec::Metric { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Config(format!("metric radius must be > 0, got {radius}")));
                }
            }
            ModelSpec::Topological { kappa } => {
                if kappa == 0 || kappa > n_agents - 1 {
                    return Err(Error::Config(format!(
                        "kappa must be in 1..={} for {n_agents} agents, got {kappa}",
                        n_agents - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Directed interaction edges; `(i, j)` means agent `i` listens to `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    pub edges: Vec<(usize, usize)>,
}

impl InteractionGraph {
    /// Per-agent listened-to lists for `n` agents.
    pub fn out_neighbors(&self, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n];
        for &(i, j) in &self.edges {
            out[i].push(j);
        }
        out
    }
}

/// Agents strictly within `radius` of agent `i`.
pub fn metric_neighbors(x: &Configuration, i: usize, radius: f64) -> Result<Vec<usize>> {
    if i >= x.n_agents() {
        return Err(Error::Config(format!("agent index {i} out of bounds")));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("radius must be > 0, got {radius}")));
    }
    let r2 = radius * radius;
    Ok((0..x.n_agents())
        .filter(|&j| j != i && x.dist2(i, j) < r2)
        .collect())
}

/// The `kappa` nearest agents to `i`, ordered by distance then index.
///
/// Ties are broken by exact floating comparison in favor of the lower index,
/// so the result is a pure function of the inputs.
pub fn topological_neighbors(x: &Configuration, i: usize, kappa: usize) -> Result<Vec<usize>> {
    let n = x.n_agents();
    if i >= n {
        return Err(Error::Config(format!("agent index {i} out of bounds")));
    }
    if kappa == 0 || kappa > n - 1 {
        return Err(Error::Config(format!(
            "kappa must be in 1..={}, got {kappa}",
            n - 1
        )));
    }
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        x.dist2(i, a)
            .partial_cmp(&x.dist2(i, b))
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    order.truncate(kappa);
    Ok(order)
}

/// The full directed interaction graph at `x` under the pointwise rule.
pub fn interaction_graph(spec: &ModelSpec, x: &Configuration) -> Result<InteractionGraph> {
    spec.validate(x.n_agents())?;
    let n = x.n_agents();
    let mut edges = Vec::new();
    match *spec {
        ModelSpec::Metric { radius } => {
            let r2 = radius * radius;
            for i in 0..n {
                for j in 0..n {
                    if i != j && x.dist2(i, j) < r2 {
                        edges.push((i, j));
                    }
                }
            }
        }
        ModelSpec::Topological { kappa } => {
            for i in 0..n {
                for j in topological_neighbors(x, i, kappa)? {
                    edges.push((i, j));
                }
            }
        }
    }
    Ok(InteractionGraph { edges })
}

/// Right-hand side of the dynamics for a fixed edge set, written into `out`.
pub(crate) fn graph_rhs(
    edges: &[(usize, usize)],
    kernel: &Kernel,
    coords: &[f64],
    dim: usize,
    out: &mut [f64],
) {
    out.fill(0.0);
    for &(i, j) in edges {
        let d = dist2(coords, dim, i, j).sqrt();
        let a = kernel.strength(d);
        for c in 0..dim {
            out[i * dim + c] += a * (coords[j * dim + c] - coords[i * dim + c]);
        }
    }
}

/// Pointwise right-hand side at `x` under the tie-broken neighbor rule.
pub fn vector_field(spec: &ModelSpec, kernel: &Kernel, x: &Configuration) -> Result<Vec<f64>> {
    let graph = interaction_graph(spec, x)?;
    let mut out = vec![0.0; x.coords().len()];
    graph_rhs(&graph.edges, kernel, x.coords(), x.dim(), &mut out);
    Ok(out)
}

/// Arithmetic mean of the agent positions.
pub fn average(x: &Configuration) -> Vec<f64> {
    let n = x.n_agents();
    let dim = x.dim();
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += x.agent(i)[c];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> Configuration {
        Configuration::from_scalars(0.0, values).unwrap()
    }

    #[test]
    fn metric_neighbors_strict_inequality() {
        let x = line(&[-1.0 / 3.0, 0.0, 1.0]);
        assert_eq!(metric_neighbors(&x, 1, 1.0).unwrap(), vec![0]);
        assert_eq!(metric_neighbors(&x, 2, 1.0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn coincident_agents_are_metric_neighbors() {
        let x = line(&[0.5, 0.5]);
        assert_eq!(metric_neighbors(&x, 0, 1.0).unwrap(), vec![1]);
        assert_eq!(metric_neighbors(&x, 1, 1.0).unwrap(), vec![0]);
    }

    #[test]
    fn topological_tie_goes_to_lower_index() {
        let x = line(&[0.0, -1.0, 1.0]);
        assert_eq!(topological_neighbors(&x, 0, 1).unwrap(), vec![1]);
    }

    #[test]
    fn topological_respects_geometry_in_2d() {
        let eps = 0.1f64;
        let x = Configuration::from_rows(
            0.0,
            &[
                vec![-1.0, 0.0],
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0 - eps, (1.0 - eps * eps).sqrt()],
            ],
        )
        .unwrap();
        assert_eq!(topological_neighbors(&x, 2, 1).unwrap(), vec![1]);
    }

    #[test]
    fn kappa_equals_n_minus_one_returns_everyone() {
        let x = line(&[0.0, 5.0, 9.0]);
        assert_eq!(topological_neighbors(&x, 0, 2).unwrap(), vec![1, 2]);
        assert!(topological_neighbors(&x, 0, 3).is_err());
        assert!(topological_neighbors(&x, 0, 0).is_err());
    }

    #[test]
    fn metric_field_matches_hand_value() {
        let x = line(&[-1.0 / 3.0, 0.0, 1.0]);
        let f = vector_field(&ModelSpec::metric(), &Kernel::Constant(1.0), &x).unwrap();
        let expect = [1.0 / 3.0, -1.0 / 3.0, 0.0];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{f:?}");
        }
    }

    #[test]
    fn topological_field_resolves_tie_to_lower_index() {
        let x = line(&[-1.0, 1.0, 0.0, 1.0, -1.0]);
        let f = vector_field(&ModelSpec::topological(1), &Kernel::Constant(1.0), &x).unwrap();
        let expect = [0.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in f.iter().zip(expect) {
            assert_eq!(*a, b, "{f:?}");
        }
    }

    #[test]
    fn seven_agent_two_nearest_field_is_exactly_zero() {
        let x = line(&[0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let f = vector_field(&ModelSpec::topological(2), &Kernel::Constant(1.0), &x).unwrap();
        assert!(f.iter().all(|v| *v == 0.0), "{f:?}");
    }

    #[test]
    fn averages() {
        let x = line(&[-1.0 / 3.0, 0.0, 1.0]);
        assert!((average(&x)[0] - 2.0 / 9.0).abs() < 1e-15);
        let y = line(&[0.0, -1.0, 1.0]);
        assert_eq!(average(&y)[0], 0.0);
        let z = Configuration::from_rows(0.0, &[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(average(&z), vec![1.0, 2.0]);
    }

    #[test]
    fn metric_graph_is_symmetric() {
        let x = Configuration::from_rows(
            0.0,
            &[vec![0.0, 0.0], vec![0.5, 0.1], vec![2.0, 2.0], vec![0.9, 0.0]],
        )
        .unwrap();
        let g = interaction_graph(&ModelSpec::metric(), &x).unwrap();
        for &(i, j) in &g.edges {
            assert!(g.edges.contains(&(j, i)));
            assert_ne!(i, j);
        }
    }

    #[test]
    fn zero_field_at_separated_clusters() {
        // two coincident groups at distance >= radius
        let x = line(&[0.0, 0.0, 1.0, 1.0]);
        let f = vector_field(&ModelSpec::metric(), &Kernel::Constant(1.0), &x).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
        // topological: each group bigger than kappa
        let f = vector_field(&ModelSpec::topological(1), &Kernel::Constant(1.0), &x).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }
}
