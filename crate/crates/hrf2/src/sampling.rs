//! Fixed-step Euler integration for generation: the inner velocity ODE, the
//! coupled two-level sampler, the one-level baseline sampler, and exact NFE
//! accounting. A fresh inner source velocity is drawn at every outer step.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dists::DistributionSpec;
use crate::error::{Error, Result};
use crate::interp::SpaceTimePoint;
use crate::model::{AccelModel, Variant};
use crate::rng::{stream_rng, streams};
use crate::SampleBatch;

/// Euler step counts per hierarchy level; total NFE is their product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfeBudget {
    pub n_t: usize,
    pub n_tau: usize,
}

impl NfeBudget {
    pub fn new(n_t: usize, n_tau: usize) -> Result<Self> {
        if n_t == 0 || n_tau == 0 {
            return Err(Error::InvalidArgument("step counts must be >= 1".into()));
        }
        Ok(Self { n_t, n_tau })
    }

    pub fn total(&self) -> usize {
        self.n_t * self.n_tau
    }
}

/// One sample's path through the outer ODE: `(t, state)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<(f64, Vec<f64>)>,
}

/// Output of a sampler run.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub samples: SampleBatch,
    pub trajectories: Vec<Trajectory>,
    /// Exact number of model evaluations consumed (rows x steps).
    pub nfe: u64,
}

/// Forward Euler on the velocity ODE at a fixed anchor, for a whole batch of
/// source velocities sharing per-row anchors. Exactly `n_tau` model
/// evaluations per row.
pub fn integrate_velocity_batch(
    model: &AccelModel,
    x_t: &SampleBatch,
    t: &[f64],
    v0: &SampleBatch,
    n_tau: usize,
    nfe: &mut u64,
) -> Result<SampleBatch> {
    if n_tau == 0 {
        return Err(Error::InvalidArgument("n_tau must be >= 1".into()));
    }
    if model.config.variant != Variant::Accel {
        return Err(Error::InvalidArgument(
            "velocity integration needs an acceleration model".into(),
        ));
    }
    let n = v0.nrows();
    let step = 1.0 / n_tau as f64;
    let mut v = v0.clone();
    for k in 0..n_tau {
        let tau = vec![k as f64 * step; n];
        let a = model.forward_batch(x_t, t, Some(&v), Some(&tau))?;
        *nfe += n as u64;
        v = &v + &(step * &a);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "velocity ODE state", step: k });
        }
    }
    Ok(v)
}

/// Scalar form of [`integrate_velocity_batch`].
pub fn integrate_velocity(
    model: &AccelModel,
    anchor: &SpaceTimePoint,
    v0: &[f64],
    n_tau: usize,
) -> Result<Vec<f64>> {
    let d = v0.len();
    let x = Array2::from_shape_fn((1, d), |(_, k)| anchor.x[k]);
    let v = Array2::from_shape_vec((1, d), v0.to_vec()).expect("shape");
    let mut nfe = 0;
    let out = integrate_velocity_batch(model, &x, &[anchor.t], &v, n_tau, &mut nfe)?;
    Ok(out.row(0).to_vec())
}

/// Coupled-ODE sampler: at each of `n_t` outer steps, draw a fresh inner
/// source velocity, integrate the velocity ODE with `n_tau` steps, then make
/// one Euler location update. Trajectories are recorded for the first
/// `track` rows.
pub fn sample_hrf2(
    model: &AccelModel,
    z0: &SampleBatch,
    budget: NfeBudget,
    seed: u64,
    track: usize,
) -> Result<SampleRun> {
    if model.config.variant != Variant::Accel {
        return Err(Error::InvalidArgument("sample_hrf2 needs an acceleration model".into()));
    }
    let n = z0.nrows();
    let d = z0.ncols();
    if d != model.config.data_dim {
        return Err(Error::DimensionMismatch { expected: model.config.data_dim, got: d });
    }
    let mut rng = stream_rng(seed, streams::SAMPLER_U0);
    let pi0 = DistributionSpec::StandardGaussian { dim: d };
    let mut z = z0.clone();
    let mut nfe = 0u64;
    let track = track.min(n);
    let mut trajectories: Vec<Trajectory> = (0..track)
        .map(|i| Trajectory { states: vec![(0.0, z0.row(i).to_vec())] })
        .collect();

    let dt = 1.0 / budget.n_t as f64;
    for k in 0..budget.n_t {
        let t_k = k as f64 * dt;
        let t_vec = vec![t_k; n];
        let u0 = pi0.sample_with(n, &mut rng);
        let u1 = integrate_velocity_batch(model, &z, &t_vec, &u0, budget.n_tau, &mut nfe)?;
        z = &z + &(dt * &u1);
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "location ODE state", step: k });
        }
        let t_next = (k + 1) as f64 * dt;
        for (i, traj) in trajectories.iter_mut().enumerate() {
            traj.states.push((t_next, z.row(i).to_vec()));
        }
    }
    Ok(SampleRun { samples: z, trajectories, nfe })
}

/// One-level baseline sampler: plain Euler on the learned velocity field.
pub fn sample_rf(model: &AccelModel, z0: &SampleBatch, n_t: usize, track: usize) -> Result<SampleRun> {
    if model.config.variant != Variant::Velocity {
        return Err(Error::InvalidArgument("sample_rf needs a velocity model".into()));
    }
    if n_t == 0 {
        return Err(Error::InvalidArgument("n_t must be >= 1".into()));
    }
    let n = z0.nrows();
    if z0.ncols() != model.config.data_dim {
        return Err(Error::DimensionMismatch {
            expected: model.config.data_dim,
            got: z0.ncols(),
        });
    }
    let mut z = z0.clone();
    let mut nfe = 0u64;
    let track = track.min(n);
    let mut trajectories: Vec<Trajectory> = (0..track)
        .map(|i| Trajectory { states: vec![(0.0, z0.row(i).to_vec())] })
        .collect();
    let dt = 1.0 / n_t as f64;
    for k in 0..n_t {
        let t_vec = vec![k as f64 * dt; n];
        let v = model.forward_batch(&z, &t_vec, None, None)?;
        nfe += n as u64;
        z = &z + &(dt * &v);
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "location ODE state", step: k });
        }
        let t_next = (k + 1) as f64 * dt;
        for (i, traj) in trajectories.iter_mut().enumerate() {
            traj.states.push((t_next, z.row(i).to_vec()));
        }
    }
    Ok(SampleRun { samples: z, trajectories, nfe })
}

/// Integrate the coupled ODEs only up to the outer step nearest `t_stop` and
/// return the states; used to test marginal preservation along the path.
pub fn marginal_snapshot(
    model: &AccelModel,
    source: &DistributionSpec,
    budget: NfeBudget,
    t_stop: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if !(0.0..=1.0).contains(&t_stop) {
        return Err(Error::InvalidArgument(format!("t_stop = {t_stop} outside [0, 1]")));
    }
    let z0 = source.sample(n, seed)?;
    let stop_steps = (t_stop * budget.n_t as f64).round() as usize;
    if stop_steps == 0 {
        return Ok(z0);
    }
    let d = z0.ncols();
    let mut rng = stream_rng(seed, streams::SAMPLER_U0);
    let pi0 = DistributionSpec::StandardGaussian { dim: d };
    let mut z = z0;
    let mut nfe = 0u64;
    let dt = 1.0 / budget.n_t as f64;
    for k in 0..stop_steps {
        let t_vec = vec![k as f64 * dt; n];
        let u0 = pi0.sample_with(n, &mut rng);
        let u1 = integrate_velocity_batch(model, &z, &t_vec, &u0, budget.n_tau, &mut nfe)?;
        z = &z + &(dt * &u1);
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: "location ODE state", step: k });
        }
    }
    Ok(z)
}
