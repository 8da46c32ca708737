//! Linear interpolation paths and their ground-truth velocity/acceleration
//! targets, for both the location and the velocity level.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::{Point, SampleBatch};

/// A location paired with its time on the outer axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Point,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Point, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
        }
        Ok(Self { x, t })
    }
}

/// A velocity paired with its time on the inner axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VelTimePoint {
    pub v: Point,
    pub tau: f64,
}

impl VelTimePoint {
    pub fn new(v: Point, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau = {tau} outside [0, 1]")));
        }
        Ok(Self { v, tau })
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// `(1-t)*x0 + t*x1`.
pub fn interp_state(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    check_dims(x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    Ok(x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b).collect())
}

/// `x1 - x0`, the path's constant velocity.
pub fn gt_velocity(x0: &[f64], x1: &[f64]) -> Result<Vec<f64>> {
    check_dims(x0, x1)?;
    Ok(x0.iter().zip(x1).map(|(a, b)| b - a).collect())
}

/// `(1-tau)*v0 + tau*v1`.
pub fn interp_velocity(v0: &[f64], v1: &[f64], tau: f64) -> Result<Vec<f64>> {
    interp_state(v0, v1, tau)
}

/// `x1 - x0 - v0`, the velocity path's constant acceleration.
pub fn gt_acceleration(x0: &[f64], x1: &[f64], v0: &[f64]) -> Result<Vec<f64>> {
    check_dims(x0, x1)?;
    check_dims(x0, v0)?;
    Ok(x0
        .iter()
        .zip(x1)
        .zip(v0)
        .map(|((a, b), v)| b - a - v)
        .collect())
}

fn check_batch(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
    }
    if a.nrows() != b.nrows() {
        return Err(Error::BatchSizeMismatch { left: a.nrows(), right: b.nrows() });
    }
    Ok(())
}

/// Row-wise interpolation with a per-row time.
pub fn interp_state_batch(x0: &SampleBatch, x1: &SampleBatch, t: &[f64]) -> Result<SampleBatch> {
    check_batch(x0.view(), x1.view())?;
    if t.len() != x0.nrows() {
        return Err(Error::BatchSizeMismatch { left: x0.nrows(), right: t.len() });
    }
    let mut out = Array2::zeros(x0.raw_dim());
    for (i, &ti) in t.iter().enumerate() {
        for k in 0..x0.ncols() {
            out[[i, k]] = (1.0 - ti) * x0[[i, k]] + ti * x1[[i, k]];
        }
    }
    Ok(out)
}

/// Row-wise `x1 - x0`.
pub fn gt_velocity_batch(x0: &SampleBatch, x1: &SampleBatch) -> Result<SampleBatch> {
    check_batch(x0.view(), x1.view())?;
    Ok(x1 - x0)
}

/// Row-wise `x1 - x0 - v0`.
pub fn gt_acceleration_batch(
    x0: &SampleBatch,
    x1: &SampleBatch,
    v0: &SampleBatch,
) -> Result<SampleBatch> {
    check_batch(x0.view(), x1.view())?;
    check_batch(x0.view(), v0.view())?;
    Ok(x1 - x0 - v0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_and_endpoints() {
        assert_eq!(interp_state(&[0.0], &[2.0], 0.5).unwrap(), vec![1.0]);
        assert_eq!(interp_state(&[3.0], &[9.0], 0.0).unwrap(), vec![3.0]);
        assert_eq!(interp_state(&[3.0], &[9.0], 1.0).unwrap(), vec![9.0]);
        assert_eq!(
            interp_state(&[1.0, 0.0], &[0.0, 1.0], 0.25).unwrap(),
            vec![0.75, 0.25]
        );
    }

    #[test]
    fn velocity_cases() {
        assert_eq!(gt_velocity(&[0.0], &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(gt_velocity(&[1.5], &[1.5]).unwrap(), vec![0.0]);
        assert_eq!(gt_velocity(&[1.0, 1.0], &[-1.0, 3.0]).unwrap(), vec![-2.0, 2.0]);
    }

    #[test]
    fn velocity_interp_cases() {
        assert_eq!(interp_velocity(&[1.0], &[3.0], 0.5).unwrap(), vec![2.0]);
        assert_eq!(interp_velocity(&[1.0], &[3.0], 0.0).unwrap(), vec![1.0]);
        assert_eq!(interp_velocity(&[1.0], &[3.0], 1.0).unwrap(), vec![3.0]);
        assert_eq!(
            interp_velocity(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn acceleration_cases() {
        assert_eq!(gt_acceleration(&[0.0], &[2.0], &[0.0]).unwrap(), vec![2.0]);
        assert_eq!(gt_acceleration(&[0.0], &[2.0], &[2.0]).unwrap(), vec![0.0]);
        assert_eq!(
            gt_acceleration(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(interp_state(&[0.0], &[1.0, 2.0], 0.5).is_err());
        assert!(gt_velocity(&[0.0], &[1.0, 2.0]).is_err());
        assert!(gt_acceleration(&[0.0], &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn time_out_of_range_rejected() {
        assert!(interp_state(&[0.0], &[1.0], 1.5).is_err());
        assert!(interp_state(&[0.0], &[1.0], -0.1).is_err());
    }

    proptest! {
        #[test]
        fn acceleration_is_velocity_minus_v0(
            x0 in prop::collection::vec(-50.0f64..50.0, 1..4),
            x1v in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..4),
        ) {
            let n = x0.len().min(x1v.len());
            let x0 = &x0[..n];
            let x1: Vec<f64> = x1v[..n].iter().map(|p| p.0).collect();
            let v0: Vec<f64> = x1v[..n].iter().map(|p| p.1).collect();
            let acc = gt_acceleration(x0, &x1, &v0).unwrap();
            let vel = gt_velocity(x0, &x1).unwrap();
            for k in 0..n {
                prop_assert!((acc[k] - (vel[k] - v0[k])).abs() < 1e-12);
            }
        }

        #[test]
        fn path_velocity_consistency(
            pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..4),
            t in 0.0f64..=1.0,
        ) {
            // interp_state + (1-t)*gt_velocity lands on x1.
            let x0: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let x1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let xt = interp_state(&x0, &x1, t).unwrap();
            let v = gt_velocity(&x0, &x1).unwrap();
            for k in 0..x0.len() {
                prop_assert!((xt[k] + (1.0 - t) * v[k] - x1[k]).abs() < 1e-9);
            }
        }
    }
}
