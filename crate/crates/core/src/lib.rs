//! Bounded-confidence opinion dynamics with discontinuous right-hand sides.
//!
//! Agents `i = 1..N` carry opinions `x_i` in `R^n` and move by
//! `dx_i/dt = sum_{j in N_i(x)} a(|x_j - x_i|) (x_j - x_i)` where the neighbor
//! set `N_i` is either metric (everyone strictly closer than a radius) or
//! topological (the `k` nearest agents, ties to the lower index). Both rules
//! make the right-hand side discontinuous, so classical solutions can die in
//! finite time; this crate computes and certifies the two generalized notions
//! that survive:
//!
//! - Caratheodory solutions ([`simulate_caratheodory`]): event-driven
//!   integration of the field frozen on the current interaction graph, with
//!   the graph rebuilt at topology changes. For `k = 1` the frozen graph is
//!   the constructive single-neighbor assignment of [`build_gamma`].
//! - Krasovsky solutions ([`simulate_krasovsky`]): at a discontinuity the
//!   admissible velocities form the convex hull of the one-sided limit fields
//!   ([`limit_field_vertices`]); events are classified as crossings, sliding,
//!   or departures, and the engine enumerates or follows the chosen branches,
//!   integrating sliding segments with the tangent convex combination.
//!
//! [`analysis`] holds the property monitors (average preservation, support
//! contractivity, convergence to clusters, the Lyapunov-style energies `V`
//! and `W`, and the out-degree-one pseudoforest structure check).

pub mod analysis;
pub mod carath;
pub mod config;
pub mod error;
pub mod gamma;
pub mod hull;
pub mod integrate;
pub mod kernel;
pub mod krasov;
pub mod model;
pub mod sample;

pub use analysis::{
    check_average_invariance, check_support_contractivity, detect_clusters, detect_convergence,
    is_caratheodory_equilibrium, lyapunov_v_metric, lyapunov_w_topological, monitor_monotonicity,
    positive_increment_fraction, pseudoforest_check, ClusterPartition, PropertyReport,
    PseudoforestReport,
};
pub use carath::{
    simulate_caratheodory, verify_caratheodory, EventRecord, FrozenGraph, PiecewiseTrajectory,
    ResidualReport, Segment,
};
pub use config::Configuration;
pub use error::Error;
pub use gamma::{build_gamma, carath_rhs, psi, validity_margin, GammaGraph};
pub use hull::{hull_membership, HullResult};
pub use integrate::{
    euler_oracle, locate_event, propagate_linear_exact, rk4_step, StepControl, Trajectory,
};
pub use kernel::Kernel;
pub use krasov::{
    active_manifolds, assemble_branch, classify_event, krasovsky_certificate,
    krasovsky_certificate_trajectory, leaves, limit_field_vertices, one_sided_fields,
    simulate_krasovsky, slide_exit_targets, sliding_coefficient, zero_in_krasovsky, BranchChoice,
    BranchEvent, BranchNode, BranchPolicy, EventClass, LimitFieldSet, ManifoldId,
};
pub use model::{
    average, interaction_graph, metric_neighbors, topological_neighbors, vector_field,
    InteractionGraph, ModelSpec,
};
pub use sample::random_configuration;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
