//! Closed-form velocity distribution at a space-time anchor for
//! Gaussian-mixture endpoints under the independent coupling, plus a
//! rejection-window estimator that also works for mini-batch-coupled pairs.
//!
//! With `x0 ~ mixture_i`, `x1 ~ mixture_j` independent, the pair
//! `(v, x_t) = (x1 - x0, (1-t) x0 + t x1)` is jointly Gaussian per component
//! pair, so conditioning on `x_t` is linear-Gaussian: the velocity law is
//! again a Gaussian mixture with posterior component weights proportional to
//! each pair's density at `x_t`. The location density uses the moment form
//! `mean = (1-t) mu0 + t mu1`, `var = (1-t)^2 s0^2 + t^2 s1^2` per axis,
//! which stays valid at both endpoints (the paper's two integral forms
//! degenerate at t = 0 and t = 1).

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dists::GaussianMixture;
use crate::error::{Error, Result};
use crate::interp::SpaceTimePoint;
use crate::rng::{stream_rng, streams};
use crate::{Point, SampleBatch};

/// Below this location density the conditional law is reported undefined.
pub const RHO_UNDERFLOW: f64 = 1e-300;

const SQRT_TAU: f64 = 2.5066282746310002;

fn gauss_pdf(x: f64, mean: f64, stdev: f64) -> f64 {
    let z = (x - mean) / stdev;
    (-0.5 * z * z).exp() / (stdev * SQRT_TAU)
}

/// Exact density of `X_t = (1-t) X0 + t X1` under the independent coupling.
pub fn rho_t(source: &GaussianMixture, target: &GaussianMixture, x_t: &[f64], t: f64) -> f64 {
    let dim = source.dim();
    debug_assert_eq!(dim, target.dim());
    debug_assert_eq!(dim, x_t.len());
    let mut p = 0.0;
    for c0 in source.components() {
        for c1 in target.components() {
            let var = (1.0 - t) * (1.0 - t) * c0.stdev * c0.stdev + t * t * c1.stdev * c1.stdev;
            let sd = var.sqrt();
            let mut comp = c0.weight * c1.weight;
            for k in 0..dim {
                let mean = (1.0 - t) * c0.mean[k] + t * c1.mean[k];
                comp *= gauss_pdf(x_t[k], mean, sd);
            }
            p += comp;
        }
    }
    p
}

/// One Gaussian component of a velocity law.
#[derive(Debug, Clone, PartialEq)]
pub struct LawComponent {
    pub weight: f64,
    pub mean: Point,
    pub stdev: f64,
}

/// The conditional law of `V = X1 - X0` given `X_t = anchor.x`: a Gaussian
/// mixture, defined only where the location density is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityLaw {
    pub anchor: SpaceTimePoint,
    pub components: Vec<LawComponent>,
}

impl VelocityLaw {
    pub fn dim(&self) -> usize {
        self.anchor.x.len()
    }

    pub fn density(&self, v: &[f64]) -> f64 {
        let mut p = 0.0;
        for c in &self.components {
            let mut term = c.weight;
            for k in 0..v.len() {
                term *= gauss_pdf(v[k], c.mean[k], c.stdev);
            }
            p += term;
        }
        p
    }

    /// Mixture mean of the law.
    pub fn mean(&self) -> Point {
        let mut m = Point::zeros(self.dim());
        for c in &self.components {
            m = m + c.weight * &c.mean;
        }
        m
    }

    pub fn sample(&self, n: usize, seed: u64) -> SampleBatch {
        let mut rng = stream_rng(seed, streams::LAW_SAMPLE);
        let dim = self.dim();
        let mut out = Array2::zeros((n, dim));
        for i in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = self.components.len() - 1;
            for (j, c) in self.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    idx = j;
                    break;
                }
            }
            let c = &self.components[idx];
            for k in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                out[[i, k]] = c.mean[k] + c.stdev * z;
            }
        }
        out
    }
}

/// Conditional velocity law at the anchor under the independent coupling.
///
/// Per component pair, with per-axis variances `s0^2`, `s1^2`:
/// `Var(X_t) = (1-t)^2 s0^2 + t^2 s1^2`,
/// `Cov(V, X_t) = t s1^2 - (1-t) s0^2`,
/// `E[V | x_t] = (mu1 - mu0) + Cov/Var * (x_t - mean_t)` per axis, and
/// `Var(V | x_t) = s0^2 s1^2 / Var(X_t)`.
pub fn velocity_law(
    source: &GaussianMixture,
    target: &GaussianMixture,
    anchor: &SpaceTimePoint,
) -> Result<VelocityLaw> {
    let dim = source.dim();
    if target.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: target.dim() });
    }
    if anchor.x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: anchor.x.len() });
    }
    let t = anchor.t;
    let x_t = anchor.x.as_slice().unwrap();
    let norm = rho_t(source, target, x_t, t);
    if !(norm > RHO_UNDERFLOW) {
        return Err(Error::UndefinedLaw);
    }

    let mut components = Vec::with_capacity(source.components().len() * target.components().len());
    for c0 in source.components() {
        for c1 in target.components() {
            let s0sq = c0.stdev * c0.stdev;
            let s1sq = c1.stdev * c1.stdev;
            let var_xt = (1.0 - t) * (1.0 - t) * s0sq + t * t * s1sq;
            let sd_xt = var_xt.sqrt();
            let cov = t * s1sq - (1.0 - t) * s0sq;
            let gain = cov / var_xt;
            let cond_var = s0sq * s1sq / var_xt;

            let mut weight = c0.weight * c1.weight;
            let mut mean = Point::zeros(dim);
            for k in 0..dim {
                let mean_t = (1.0 - t) * c0.mean[k] + t * c1.mean[k];
                weight *= gauss_pdf(x_t[k], mean_t, sd_xt);
                mean[k] = (c1.mean[k] - c0.mean[k]) + gain * (x_t[k] - mean_t);
            }
            components.push(LawComponent { weight, mean, stdev: cond_var.sqrt() });
        }
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if !(total > RHO_UNDERFLOW) {
        return Err(Error::UndefinedLaw);
    }
    for c in &mut components {
        c.weight /= total;
    }
    Ok(VelocityLaw { anchor: anchor.clone(), components })
}

/// A stream of coupled `(x0, x1)` batches.
pub trait PairSampler {
    /// Next batch of coupled pairs, row `i` of each side forming one pair.
    fn next_batch(&mut self) -> Result<(SampleBatch, SampleBatch)>;
}

/// Independent draws from source and target.
pub struct IndependentPairs {
    source: crate::dists::DistributionSpec,
    target: crate::dists::DistributionSpec,
    batch: usize,
    rng0: rand_chacha::ChaCha8Rng,
    rng1: rand_chacha::ChaCha8Rng,
}

impl IndependentPairs {
    pub fn new(
        source: crate::dists::DistributionSpec,
        target: crate::dists::DistributionSpec,
        batch: usize,
        seed: u64,
    ) -> Self {
        Self {
            source,
            target,
            batch,
            rng0: stream_rng(seed, streams::DATA_X0),
            rng1: stream_rng(seed, streams::DATA_X1),
        }
    }
}

impl PairSampler for IndependentPairs {
    fn next_batch(&mut self) -> Result<(SampleBatch, SampleBatch)> {
        let x0 = self.source.sample_with(self.batch, &mut self.rng0);
        let x1 = self.target.sample_with(self.batch, &mut self.rng1);
        Ok((x0, x1))
    }
}

/// Mini-batch OT-coupled draws: each batch is paired by the exact solver.
pub struct OtCoupledPairs {
    inner: IndependentPairs,
}

impl OtCoupledPairs {
    pub fn new(
        source: crate::dists::DistributionSpec,
        target: crate::dists::DistributionSpec,
        ot_batch: usize,
        seed: u64,
    ) -> Self {
        Self { inner: IndependentPairs::new(source, target, ot_batch, seed) }
    }
}

impl PairSampler for OtCoupledPairs {
    fn next_batch(&mut self) -> Result<(SampleBatch, SampleBatch)> {
        let (x0, x1) = self.inner.next_batch()?;
        let plan = crate::coupling::solve_ot(&x0, &x1)?;
        Ok((x0, crate::coupling::permute_to_match(&x1, &plan)))
    }
}

/// Estimate the velocity distribution at an anchor by rejection: keep
/// velocities of pairs whose interpolated state lands within `window` of the
/// anchor. Works for any coupling, including ones with no closed form.
///
/// Fails if fewer than 100 velocities (or fewer than `n`) are accepted
/// within `max_draws` candidate pairs.
pub fn empirical_velocity_law(
    gamma: &mut dyn PairSampler,
    anchor: &SpaceTimePoint,
    window: f64,
    n: usize,
    max_draws: usize,
) -> Result<SampleBatch> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument("window must be > 0".into()));
    }
    let dim = anchor.x.len();
    let t = anchor.t;
    let mut kept: Vec<f64> = Vec::with_capacity(n * dim);
    let mut accepted = 0usize;
    let mut drawn = 0usize;
    while accepted < n && drawn < max_draws {
        let (x0, x1) = gamma.next_batch()?;
        drawn += x0.nrows();
        for i in 0..x0.nrows() {
            let mut dist_sq = 0.0;
            for k in 0..dim {
                let xt = (1.0 - t) * x0[[i, k]] + t * x1[[i, k]];
                let d = xt - anchor.x[k];
                dist_sq += d * d;
            }
            if dist_sq.sqrt() <= window {
                for k in 0..dim {
                    kept.push(x1[[i, k]] - x0[[i, k]]);
                }
                accepted += 1;
                if accepted == n {
                    break;
                }
            }
        }
    }
    if accepted < 100 || accepted < n.min(100) {
        return Err(Error::RejectionStarved { accepted, required: n.min(100).max(100) });
    }
    Ok(Array2::from_shape_vec((accepted, dim), kept).expect("shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{preset, DistributionSpec};
    use crate::metrics::w1_1d;

    fn one_d_2n() -> (GaussianMixture, GaussianMixture) {
        let (source, target) = preset("1d-2n").unwrap();
        (source.as_mixture().unwrap(), target.as_mixture().unwrap())
    }

    #[test]
    fn rho_t_matches_endpoints() {
        let (s, t) = one_d_2n();
        for x in [-1.5, -0.3, 0.0, 0.8, 2.0] {
            let p0 = rho_t(&s, &t, &[x], 0.0);
            assert!((p0 - s.density(&[x]).unwrap()).abs() < 1e-14);
            let p1 = rho_t(&s, &t, &[x], 1.0);
            assert!((p1 - t.density(&[x]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn rho_t_matches_monte_carlo_histogram() {
        // Oracle: 10^6 interpolated draws, density read from a narrow bin.
        let (s, t) = one_d_2n();
        let n = 1_000_000;
        let src = DistributionSpec::StandardGaussian { dim: 1 };
        let (_, tgt) = preset("1d-2n").unwrap();
        let x0 = src.sample(n, 100).unwrap();
        let x1 = tgt.sample(n, 101).unwrap();
        let half_width = 0.02;
        let mut count = 0usize;
        for i in 0..n {
            let xt = 0.5 * x0[[i, 0]] + 0.5 * x1[[i, 0]];
            if xt.abs() <= half_width {
                count += 1;
            }
        }
        let mc = count as f64 / (n as f64 * 2.0 * half_width);
        let exact = rho_t(&s, &t, &[0.0], 0.5);
        assert!(
            (mc - exact).abs() / exact < 0.02,
            "monte carlo {mc} vs exact {exact}"
        );
    }

    #[test]
    fn rho_t_integrates_to_one() {
        let (s, t) = one_d_2n();
        for tt in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let n = 40_000;
            let h = 24.0 / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let x = -12.0 + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                total += w * rho_t(&s, &t, &[x], tt);
            }
            total *= h;
            assert!((total - 1.0).abs() < 1e-6, "t={tt}: integral {total}");
        }
    }

    #[test]
    fn law_at_t0_is_shifted_target() {
        // At t = 0 the law's density is rho1(x_t + v).
        let (s, t) = one_d_2n();
        let anchor = SpaceTimePoint::new(Point::from_vec(vec![-1.0]), 0.0).unwrap();
        let law = velocity_law(&s, &t, &anchor).unwrap();
        for v in [-1.0, 0.0, 0.5, 2.0, 3.0] {
            let expected = t.density(&[-1.0 + v]).unwrap();
            assert!(
                (law.density(&[v]) - expected).abs() < 1e-12,
                "v={v}: {} vs {expected}",
                law.density(&[v])
            );
        }
        // Modes at 0 and 2: shifted target means {-1, +1} by x_t = -1.
        let mut means: Vec<f64> = law.components.iter().map(|c| c.mean[0]).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] - 0.0).abs() < 1e-12 && (means[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn law_density_integrates_to_one() {
        let (s, t) = one_d_2n();
        for (x, tt) in [(-1.0, 0.0), (0.0, 0.5), (1.0, 0.9)] {
            let anchor = SpaceTimePoint::new(Point::from_vec(vec![x]), tt).unwrap();
            let law = velocity_law(&s, &t, &anchor).unwrap();
            let n = 40_000;
            let h = 30.0 / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let v = -15.0 + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                total += w * law.density(&[v]);
            }
            total *= h;
            assert!((total - 1.0).abs() < 1e-6, "({x},{tt}): integral {total}");
        }
    }

    #[test]
    fn change_of_variables_identity() {
        // pi1(v; x_t, t) * rho_t(x_t) = gamma(x_t - t v, x_t + (1-t) v)
        // for the independent product coupling.
        let (s, t) = one_d_2n();
        let mut rng = stream_rng(17, 87);
        use rand::Rng;
        for _ in 0..200 {
            let x: f64 = rng.random::<f64>() * 4.0 - 2.0;
            let v: f64 = rng.random::<f64>() * 6.0 - 3.0;
            let tt: f64 = rng.random::<f64>() * 0.98 + 0.01;
            let anchor = SpaceTimePoint::new(Point::from_vec(vec![x]), tt).unwrap();
            let law = match velocity_law(&s, &t, &anchor) {
                Ok(l) => l,
                Err(Error::UndefinedLaw) => continue,
                Err(e) => panic!("{e}"),
            };
            let lhs = law.density(&[v]) * rho_t(&s, &t, &[x], tt);
            let x0 = x - tt * v;
            let x1 = x + (1.0 - tt) * v;
            let rhs = s.density(&[x0]).unwrap() * t.density(&[x1]).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * rhs.max(1.0),
                "x={x} v={v} t={tt}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn undefined_law_signalled_out_of_support() {
        let (s, t) = one_d_2n();
        let anchor = SpaceTimePoint::new(Point::from_vec(vec![1e3]), 0.0).unwrap();
        assert!(matches!(velocity_law(&s, &t, &anchor), Err(Error::UndefinedLaw)));
    }

    #[test]
    fn empirical_matches_closed_form_on_independent_pairs() {
        let (source, target) = preset("1d-2n").unwrap();
        let (s, t) = one_d_2n();
        let anchor = SpaceTimePoint::new(Point::from_vec(vec![-1.0]), 0.0).unwrap();
        let mut gamma = IndependentPairs::new(source, target, 4096, 500);
        let emp = empirical_velocity_law(&mut gamma, &anchor, 0.05, 10_000, 4_000_000).unwrap();
        let law = velocity_law(&s, &t, &anchor).unwrap();
        let exact = law.sample(10_000, 501);
        let w1 = w1_1d(&emp.column(0).to_vec(), &exact.column(0).to_vec()).unwrap();
        assert!(w1 < 0.1, "W1 {w1}");
    }

    #[test]
    fn window_shrink_improves_estimate() {
        let (source, target) = preset("1d-2n").unwrap();
        let (s, t) = one_d_2n();
        let anchor = SpaceTimePoint::new(Point::from_vec(vec![0.5]), 0.5).unwrap();
        let law = velocity_law(&s, &t, &anchor).unwrap();
        let exact = law.sample(20_000, 502);
        let mut dists = Vec::new();
        for (i, window) in [0.2, 0.1, 0.05].into_iter().enumerate() {
            let mut gamma =
                IndependentPairs::new(source.clone(), target.clone(), 4096, 600 + i as u64);
            let emp =
                empirical_velocity_law(&mut gamma, &anchor, window, 20_000, 40_000_000).unwrap();
            let w1 = w1_1d(&emp.column(0).to_vec(), &exact.column(0).to_vec()).unwrap();
            dists.push(w1);
        }
        assert!(
            dists[0] > dists[2],
            "window shrink did not improve: {dists:?}"
        );
    }

    #[test]
    fn starved_rejection_fails() {
        let (source, target) = preset("1d-2n").unwrap();
        let anchor = SpaceTimePoint::new(Point::from_vec(vec![0.0]), 0.5).unwrap();
        let mut gamma = IndependentPairs::new(source, target, 64, 1);
        let res = empirical_velocity_law(&mut gamma, &anchor, 1e-6, 1_000, 10_000);
        assert!(matches!(res, Err(Error::RejectionStarved { .. })));
    }

    #[test]
    fn coupled_pairs_preserve_marginals() {
        let (source, target) = preset("1d-2n").unwrap();
        let mut indep = IndependentPairs::new(source.clone(), target.clone(), 256, 7);
        let mut coupled = OtCoupledPairs::new(source, target, 256, 7);
        let (i0, i1) = indep.next_batch().unwrap();
        let (c0, c1) = coupled.next_batch().unwrap();
        assert_eq!(i0, c0);
        let mut a: Vec<f64> = i1.column(0).to_vec();
        let mut b: Vec<f64> = c1.column(0).to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }
}
