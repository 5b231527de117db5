//! Random configuration generation for property sweeps.

use rand::Rng;

use crate::config::Configuration;
use crate::error::Error;
use crate::Result;

/// Draw `n_agents` opinions uniformly from the centered cube of half-width
/// `spread`. Deterministic given the generator state, so seeded runs
/// reproduce exactly.
pub fn random_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    dim: usize,
    spread: f64,
) -> Result<Configuration> {
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::Domain(format!("spread must be > 0, got {spread}")));
    }
    let coords: Vec<f64> = (0..n_agents * dim)
        .map(|_| rng.random_range(-spread..spread))
        .collect();
    Configuration::new(0.0, dim, coords)
}
