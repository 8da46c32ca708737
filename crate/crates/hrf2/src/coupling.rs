//! Exact mini-batch optimal transport under squared Euclidean cost, and the
//! data/velocity coupling constructors built on it.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interp::SpaceTimePoint;
use crate::model::AccelModel;
use crate::rng::{stream_rng, streams};
use crate::sampling;
use crate::{Point, SampleBatch};

/// Largest batch the exact solver accepts.
pub const MAX_EXACT_OT_BATCH: usize = 4096;

/// A minimum-cost permutation pairing two equal-size batches.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan {
    /// `sigma[i]` is the right-batch row matched to left row `i`.
    pub sigma: Vec<usize>,
    /// Total squared Euclidean cost of the matching.
    pub cost: f64,
    pub batch_size: usize,
}

impl CouplingPlan {
    /// Recompute the cost of this plan on the given batches.
    pub fn cost_on(&self, a: &SampleBatch, b: &SampleBatch) -> f64 {
        pairing_cost(a, b, &self.sigma)
    }
}

fn sq_dist(a: &SampleBatch, i: usize, b: &SampleBatch, j: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..a.ncols() {
        let d = a[[i, k]] - b[[j, k]];
        s += d * d;
    }
    s
}

fn pairing_cost(a: &SampleBatch, b: &SampleBatch, sigma: &[usize]) -> f64 {
    sigma
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist(a, i, b, j))
        .sum()
}

/// Exact assignment by shortest augmenting paths with potentials, O(B^3).
///
/// Ties are broken deterministically by scan order; a canonicalization pass
/// afterwards makes the permutation lexicographically smallest among
/// cost-preserving pairwise swaps (stabilizes duplicate inputs).
pub fn solve_ot(a: &SampleBatch, b: &SampleBatch) -> Result<CouplingPlan> {
    if a.nrows() != b.nrows() {
        return Err(Error::BatchSizeMismatch { left: a.nrows(), right: b.nrows() });
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
    }
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if n > MAX_EXACT_OT_BATCH {
        return Err(Error::BatchTooLarge { got: n, bound: MAX_EXACT_OT_BATCH });
    }

    // 1-based arrays; index 0 is the virtual start column.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = sq_dist(a, i0 - 1, b, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        sigma[assigned_row[j] - 1] = j - 1;
    }
    canonicalize_ties(a, b, &mut sigma);
    let cost = pairing_cost(a, b, &sigma);
    Ok(CouplingPlan { sigma, cost, batch_size: n })
}

/// Swap pairs whose exchange leaves the cost bit-identical whenever the swap
/// lowers the permutation lexicographically. Bounded by `n` passes, which is
/// enough to fully order duplicate rows.
fn canonicalize_ties(a: &SampleBatch, b: &SampleBatch, sigma: &mut [usize]) {
    let n = sigma.len();
    for _ in 0..n {
        let mut changed = false;
        for i in 0..n {
            for j in (i + 1)..n {
                if sigma[i] > sigma[j] {
                    let before = sq_dist(a, i, b, sigma[i]) + sq_dist(a, j, b, sigma[j]);
                    let after = sq_dist(a, i, b, sigma[j]) + sq_dist(a, j, b, sigma[i]);
                    if before == after {
                        sigma.swap(i, j);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// OT-couple two batches and return the paired rows `(x0_i, x1_{sigma(i)})`.
pub fn couple_data(x0: &SampleBatch, x1: &SampleBatch) -> Result<Vec<(Point, Point)>> {
    let plan = solve_ot(x0, x1)?;
    Ok(plan
        .sigma
        .iter()
        .enumerate()
        .map(|(i, &j)| (x0.row(i).to_owned(), x1.row(j).to_owned()))
        .collect())
}

/// x1 reordered so that row `i` is the OT partner of `x0` row `i`.
pub fn permute_to_match(x1: &SampleBatch, plan: &CouplingPlan) -> SampleBatch {
    let mut out = Array2::zeros(x1.raw_dim());
    for (i, &j) in plan.sigma.iter().enumerate() {
        out.row_mut(i).assign(&x1.row(j));
    }
    out
}

/// Velocity pairs at a fixed space-time anchor.
#[derive(Debug, Clone)]
pub struct VelocityPairBatch {
    pub anchor: SpaceTimePoint,
    pub v0: SampleBatch,
    /// Generated target velocities, in generation order (not permuted).
    pub v1: SampleBatch,
    pub plan: CouplingPlan,
}

impl VelocityPairBatch {
    /// Coupled pairs `(v0_i, v1_{sigma(i)})`.
    pub fn pairs(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.plan
            .sigma
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.v0.row(i).to_owned(), self.v1.row(j).to_owned()))
    }

    /// v1 reordered into pairing order.
    pub fn v1_matched(&self) -> SampleBatch {
        permute_to_match(&self.v1, &self.plan)
    }
}

/// Draw `B` source velocities, push each through the velocity ODE of a
/// pre-trained model at the anchor, then OT-couple sources to targets.
pub fn couple_velocity(
    anchor: &SpaceTimePoint,
    batch: usize,
    model: &AccelModel,
    n_tau: usize,
    seed: u64,
) -> Result<VelocityPairBatch> {
    let mut rng = stream_rng(seed, streams::PAIR_V0);
    couple_velocity_with(anchor, batch, model, n_tau, &mut rng)
}

/// As [`couple_velocity`], drawing from a caller-owned generator.
pub fn couple_velocity_with(
    anchor: &SpaceTimePoint,
    batch: usize,
    model: &AccelModel,
    n_tau: usize,
    rng: &mut ChaCha8Rng,
) -> Result<VelocityPairBatch> {
    if batch == 0 {
        return Err(Error::EmptyBatch);
    }
    if n_tau == 0 {
        return Err(Error::InvalidArgument("n_tau must be >= 1".into()));
    }
    let dim = model.config.data_dim;
    if anchor.x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: anchor.x.len() });
    }
    let v0 = crate::dists::DistributionSpec::StandardGaussian { dim }.sample_with(batch, rng);
    let x_t = Array2::from_shape_fn((batch, dim), |(_, k)| anchor.x[k]);
    let t = vec![anchor.t; batch];
    let mut nfe = 0u64;
    let v1 = sampling::integrate_velocity_batch(model, &x_t, &t, &v0, n_tau, &mut nfe)?;
    let plan = solve_ot(&v0, &v1)?;
    Ok(VelocityPairBatch { anchor: anchor.clone(), v0, v1, plan })
}
