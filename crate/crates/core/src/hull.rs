use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Outcome of a convex-hull membership query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HullResult {
    pub inside: bool,
    /// Euclidean distance from the query point to the hull (0 when inside).
    pub distance: f64,
}

const MAX_ITER: usize = 2000;

/// Minimum distance from `p` to the convex hull of `points`.
///
/// Runs the minimum-norm-point scheme on the shifted set `{q_k = p_k - p}`:
/// keep a small affinely independent working set, solve the affine
/// least-norm problem on it, and swap vertices in and out until no point
/// improves the objective. Deterministic to `tol / 10`; `inside` means
/// `distance <= tol`.
pub fn hull_membership(points: &[Vec<f64>], p: &[f64], tol: f64) -> Result<HullResult> {
    if points.is_empty() {
        return Err(Error::Precondition("hull membership needs a nonempty point set".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be > 0, got {tol}")));
    }
    let dim = p.len();
    if points.iter().any(|q| q.len() != dim) {
        return Err(Error::Precondition("hull points and query have mixed dimensions".into()));
    }

    // shift so the query is the origin, drop exact duplicates
    let mut qs: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for pt in points {
        let q = DVector::from_iterator(dim, pt.iter().zip(p).map(|(a, b)| a - b));
        if !qs.iter().any(|seen| seen == &q) {
            qs.push(q);
        }
    }

    let scale = qs.iter().map(|q| q.norm()).fold(0.0f64, f64::max);
    let accuracy = tol / 10.0;
    if scale == 0.0 {
        // every hull point coincides with the query
        return Ok(HullResult { inside: true, distance: 0.0 });
    }

    // start from the closest point
    let mut best = 0;
    for (k, q) in qs.iter().enumerate() {
        if q.norm_squared() < qs[best].norm_squared() {
            best = k;
        }
    }
    let mut corral: Vec<usize> = vec![best];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut w = qs[best].clone();

    let mut gap = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let wn2 = w.norm_squared();
        if wn2.sqrt() <= accuracy {
            return Ok(HullResult { inside: true, distance: wn2.sqrt() });
        }

        // most improving vertex
        let mut j_star = 0;
        let mut dot_min = f64::INFINITY;
        for (k, q) in qs.iter().enumerate() {
            let d = w.dot(q);
            if d < dot_min {
                dot_min = d;
                j_star = k;
            }
        }
        gap = wn2 - dot_min;
        // optimality: no vertex is on the near side of the supporting hyperplane
        if gap <= accuracy * wn2.sqrt() + 1e-18 * scale * scale {
            break;
        }
        if corral.contains(&j_star) {
            // numerically stalled; the gap bound still certifies the answer below
            break;
        }
        corral.push(j_star);
        lambda.push(0.0);

        // minor cycle: restore a corral whose affine least-norm point has
        // nonnegative weights
        loop {
            let mu = match affine_min_norm(&qs, &corral) {
                Some(mu) => mu,
                None => {
                    return Err(Error::Numeric(format!(
                        "hull membership: affine subproblem became singular (gap {gap:.3e})"
                    )))
                }
            };
            if mu.iter().all(|&m| m >= -1e-12) {
                lambda = mu.iter().map(|&m| m.max(0.0)).collect();
                break;
            }
            // step from lambda toward mu until the first weight hits zero
            let mut theta = 1.0f64;
            for (l, m) in lambda.iter().zip(&mu) {
                if *m < 1e-12 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lambda.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 1e-12).collect();
            if keep.iter().all(|&k| k) {
                // rounding kept everything positive; drop the smallest to make progress
                let mut min_idx = 0;
                for (k, l) in lambda.iter().enumerate() {
                    if *l < lambda[min_idx] {
                        min_idx = k;
                    }
                }
                corral.remove(min_idx);
                lambda.remove(min_idx);
            } else {
                let mut k = 0;
                corral.retain(|_| {
                    let keep_it = keep[k];
                    k += 1;
                    keep_it
                });
                let mut k = 0;
                lambda.retain(|_| {
                    let keep_it = keep[k];
                    k += 1;
                    keep_it
                });
            }
            let total: f64 = lambda.iter().sum();
            for l in &mut lambda {
                *l /= total;
            }
        }

        w = DVector::zeros(dim);
        for (idx, l) in corral.iter().zip(&lambda) {
            w += &qs[*idx] * *l;
        }
    }

    let distance = w.norm();
    if gap.is_infinite() || gap > accuracy * distance.max(1.0) + 1e-12 * scale * scale {
        // only reachable when the iteration cap is hit before optimality
        if distance > tol && gap > tol * distance {
            return Err(Error::Numeric(format!(
                "hull membership did not converge: distance {distance:.3e}, gap {gap:.3e}"
            )));
        }
    }
    Ok(HullResult { inside: distance <= tol, distance })
}

/// Least-norm point of the affine hull of `qs[corral]`, as barycentric
/// weights. `None` when the KKT system is singular.
fn affine_min_norm(qs: &[DVector<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    if m == 1 {
        return Some(vec![1.0]);
    }
    // KKT system for: minimize |Q mu|^2 subject to sum(mu) = 1
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    for a in 0..m {
        for b in 0..m {
            kkt[(a, b)] = qs[corral[a]].dot(&qs[corral[b]]);
        }
        kkt[(a, m)] = 1.0;
        kkt[(m, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let solved = kkt.full_piv_lu().solve(&rhs)?;
    Some(solved.as_slice()[..m].to_vec())
}
