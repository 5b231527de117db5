use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Positions of `N` agents in `R^n` at one time instant.
///
/// Coordinates are stored row-major: agent `i` occupies
/// `coords[i*dim .. (i+1)*dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub t: f64,
    dim: usize,
    coords: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConfigurationJson {
    n: usize,
    positions: Vec<Vec<f64>>,
}

impl Configuration {
    /// Build from a flat row-major coordinate vector.
    pub fn new(t: f64, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("opinion dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Config(format!(
                "coordinate count {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        let n_agents = coords.len() / dim;
        if n_agents < 2 {
            return Err(Error::Config(format!(
                "need at least 2 agents, got {n_agents}"
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) || !t.is_finite() {
            return Err(Error::Config("coordinates and time must be finite".into()));
        }
        Ok(Configuration { t, dim, coords })
    }

    /// Build from one row per agent.
    pub fn from_rows(t: f64, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("no agents given".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Config("agents have mixed dimensions".into()));
        }
        Configuration::new(t, dim, rows.concat())
    }

    /// One-dimensional shorthand used throughout the scenario data.
    pub fn from_scalars(t: f64, values: &[f64]) -> Result<Self> {
        Configuration::new(t, 1, values.to_vec())
    }

    pub fn n_agents(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Same layout, different coordinates and time.
    pub fn with_state(&self, t: f64, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), self.coords.len());
        Configuration {
            t,
            dim: self.dim,
            coords,
        }
    }

    /// Squared distance between agents `i` and `j`.
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        dist2(&self.coords, self.dim, i, j)
    }

    /// Euclidean distance between agents `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist2(i, j).sqrt()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let n = self.n_agents();
        let mut d2 = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                d2 = d2.max(self.dist2(i, j));
            }
        }
        d2.sqrt()
    }

    /// Largest coordinate magnitude; the scale used by relative tolerances.
    pub fn scale(&self) -> f64 {
        self.coords.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Parse the `{"n": .., "positions": [[..], ..]}` JSON form; time is 0.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: ConfigurationJson = serde_json::from_str(s)?;
        if parsed.positions.iter().any(|p| p.len() != parsed.n) {
            return Err(Error::Config(format!(
                "positions rows must each have n = {} coordinates",
                parsed.n
            )));
        }
        Configuration::from_rows(0.0, &parsed.positions)
    }

    /// Serialize to the `{"n": .., "positions": ..}` JSON form.
    pub fn to_json_string(&self) -> String {
        let rows: Vec<Vec<f64>> = (0..self.n_agents())
            .map(|i| self.agent(i).to_vec())
            .collect();
        serde_json::to_string(&ConfigurationJson {
            n: self.dim,
            positions: rows,
        })
        .expect("configuration serialization cannot fail")
    }
}

/// Largest coordinate magnitude on a raw coordinate slice.
#[inline]
pub(crate) fn scale_of(coords: &[f64]) -> f64 {
    coords.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

/// Squared distance on a raw row-major coordinate slice.
#[inline]
pub(crate) fn dist2(coords: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    let a = &coords[i * dim..(i + 1) * dim];
    let b = &coords[j * dim..(j + 1) * dim];
    let mut acc = 0.0;
    for d in 0..dim {
        let diff = a[d] - b[d];
        acc += diff * diff;
    }
    acc
}
