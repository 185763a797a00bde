//! Continuous-time pose curves and IMU synthesis.
//!
//! A [`PoseSpline`] is a uniform cubic B-spline over six channels (position
//! and an unwrapped rotation vector) that interpolates its control poses
//! with not-a-knot end conditions.

mod imu;
mod so3;

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pose_from_parts, rotation_vector, Pose, TimedPose};

pub use imu::{
    add_imu_noise, imu_from_csv, imu_to_csv, read_imu_csv, synthesize_imu, write_imu_csv, ImuConfig, ImuNoise,
    ImuSample,
};
pub use so3::{right_jacobian, right_jacobian_rate};

/// Relative tolerance on timestamp spacing.
const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("a cubic spline needs at least 4 poses, got {0}")]
    TooFewPoses(usize),
    #[error("timestamps are not uniformly spaced at index {0}")]
    NonUniform(usize),
    #[error("rotation vector jumps by {angle:.4} rad between poses {index} and {next}", next = index + 1)]
    RotationJump { index: usize, angle: f64 },
    #[error("time {t} is outside the spline span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("derivative order must be 0, 1 or 2, got {0}")]
    Order(u8),
    #[error("invalid IMU configuration: {0}")]
    Config(String),
    #[error("IMU file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

/// Uniform cubic B-spline over `(position, rotation vector)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpline {
    /// Control-pose timestamps, uniformly spaced.
    pub knots: Vec<f64>,
    /// B-spline coefficients; `control_points[k]` weights the basis function
    /// centred on `knots[k - 1]`, so there are `knots.len() + 2` of them.
    pub control_points: Vec<Vector6<f64>>,
}

/// Picks the representation of `phi` closest to `prev` among the rotation
/// vectors of the same rotation.
fn unwrap_near(phi: &Vector3<f64>, prev: &Vector3<f64>) -> Vector3<f64> {
    let theta = phi.norm();
    let axis = if theta > 1e-12 {
        phi / theta
    } else if let Some(a) = prev.try_normalize(1e-12) {
        a
    } else {
        return *phi;
    };
    // Candidates are (θ + 2πk)·axis; the distance to `prev` is smallest
    // when θ + 2πk is nearest to the projection of `prev` on the axis.
    let k = ((prev.dot(&axis) - theta) / (2.0 * PI)).round();
    axis * (theta + 2.0 * PI * k)
}

/// Unwrapped rotation vectors of consecutive poses.
pub fn unwrap_rotations(poses: &[TimedPose]) -> Result<Vec<Vector3<f64>>, SplineError> {
    let mut out: Vec<Vector3<f64>> = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        let phi = rotation_vector(&p.pose.rotation);
        let phi = match out.last() {
            Some(prev) => {
                let u = unwrap_near(&phi, prev);
                let angle = (u - prev).norm();
                if angle >= PI {
                    return Err(SplineError::RotationJump { index: i - 1, angle });
                }
                u
            }
            None => phi,
        };
        out.push(phi);
    }
    Ok(out)
}

/// Solves for uniform cubic B-spline coefficients `c[-1..=n]` (stored at
/// offset 1) interpolating `y` with not-a-knot ends.
///
/// With unit spacing, the interpolation rows read `c[i-1] + 4c[i] + c[i+1] = 6y[i]`.
/// Not-a-knot at the second knot combined with the first three rows fixes
/// `c[1] = (8y[1] - y[0] - y[2]) / 6`, and symmetrically at the end, which
/// leaves a tridiagonal system for `c[2..=n-3]`.
fn solve_coefficients(y: &[Vector6<f64>]) -> Vec<Vector6<f64>> {
    let n = y.len();
    let mut c = vec![Vector6::zeros(); n + 2];
    let at = |i: isize| (i + 1) as usize;
    c[at(1)] = (y[1] * 8.0 - y[0] - y[2]) / 6.0;
    c[at(n as isize - 2)] = (y[n - 2] * 8.0 - y[n - 1] - y[n - 3]) / 6.0;
    // Thomas algorithm on rows i = 2..=n-3.
    let m = n.saturating_sub(4);
    if m > 0 {
        let mut diag = vec![4.0; m];
        let mut rhs: Vec<Vector6<f64>> = (0..m).map(|k| y[k + 2] * 6.0).collect();
        rhs[0] -= c[at(1)];
        rhs[m - 1] -= c[at(n as isize - 2)];
        for k in 1..m {
            let w = 1.0 / diag[k - 1];
            diag[k] -= w;
            let prev = rhs[k - 1];
            rhs[k] -= prev * w;
        }
        let mut x = vec![Vector6::zeros(); m];
        x[m - 1] = rhs[m - 1] / diag[m - 1];
        for k in (0..m - 1).rev() {
            x[k] = (rhs[k] - x[k + 1]) / diag[k];
        }
        for (k, v) in x.into_iter().enumerate() {
            c[at(k as isize + 2)] = v;
        }
    }
    c[at(0)] = y[1] * 6.0 - c[at(1)] * 4.0 - c[at(2)];
    c[at(-1)] = y[0] * 6.0 - c[at(0)] * 4.0 - c[at(1)];
    c[at(n as isize - 1)] = y[n - 2] * 6.0 - c[at(n as isize - 3)] - c[at(n as isize - 2)] * 4.0;
    c[at(n as isize)] = y[n - 1] * 6.0 - c[at(n as isize - 2)] - c[at(n as isize - 1)] * 4.0;
    c
}

/// Fits an interpolating cubic B-spline to uniformly spaced poses.
pub fn fit_spline(poses: &[TimedPose]) -> Result<PoseSpline, SplineError> {
    if poses.len() < 4 {
        return Err(SplineError::TooFewPoses(poses.len()));
    }
    let n = poses.len();
    let h = (poses[n - 1].timestamp - poses[0].timestamp) / (n - 1) as f64;
    if !(h > 0.0) || !h.is_finite() {
        return Err(SplineError::NonUniform(1));
    }
    for (i, p) in poses.iter().enumerate() {
        let expected = poses[0].timestamp + h * i as f64;
        if (p.timestamp - expected).abs() > SPACING_TOL * h + 1e-12 * expected.abs() {
            return Err(SplineError::NonUniform(i));
        }
    }
    let rot = unwrap_rotations(poses)?;
    let y: Vec<Vector6<f64>> = poses
        .iter()
        .zip(&rot)
        .map(|(p, r)| {
            let t = p.pose.translation.vector;
            Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
        })
        .collect();
    Ok(PoseSpline {
        knots: poses.iter().map(|p| p.timestamp).collect(),
        control_points: solve_coefficients(&y),
    })
}

fn split(v: &Vector6<f64>) -> (Vector3<f64>, Vector3<f64>) {
    (v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
}

impl PoseSpline {
    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Knot spacing in seconds.
    pub fn spacing(&self) -> f64 {
        (self.end() - self.start()) / (self.knots.len() - 1) as f64
    }

    /// The 6-channel curve (order 0) or its first or second time derivative
    /// at `t`.
    pub fn eval(&self, t: f64, order: u8) -> Result<Vector6<f64>, SplineError> {
        if order > 2 {
            return Err(SplineError::Order(order));
        }
        let (start, end) = (self.start(), self.end());
        let slack = 1e-9 * self.spacing();
        if !(t >= start - slack && t <= end + slack) {
            return Err(SplineError::OutOfSpan { t, start, end });
        }
        let h = self.spacing();
        let s = ((t - start) / h).clamp(0.0, (self.knots.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.knots.len() - 2);
        let u = s - i as f64;
        let (u2, u3) = (u * u, u * u * u);
        let w: [f64; 4] = match order {
            0 => [
                (1.0 - u).powi(3) / 6.0,
                (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
                (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
                u3 / 6.0,
            ],
            1 => [
                -(1.0 - u).powi(2) / 2.0 / h,
                (1.5 * u2 - 2.0 * u) / h,
                (-1.5 * u2 + u + 0.5) / h,
                u2 / 2.0 / h,
            ],
            _ => [
                (1.0 - u) / (h * h),
                (3.0 * u - 2.0) / (h * h),
                (1.0 - 3.0 * u) / (h * h),
                u / (h * h),
            ],
        };
        // Segment i uses coefficients c[i-1..=i+2], stored at i..=i+3.
        Ok((0..4).map(|k| self.control_points[i + k] * w[k]).sum())
    }

    pub fn pose(&self, t: f64) -> Result<Pose, SplineError> {
        let (p, r) = split(&self.eval(t, 0)?);
        Ok(pose_from_parts(p, r))
    }

    /// Body-frame angular velocity and angular acceleration at `t`.
    pub fn body_rates(&self, t: f64) -> Result<(Vector3<f64>, Vector3<f64>), SplineError> {
        let (_, phi) = split(&self.eval(t, 0)?);
        let (_, dphi) = split(&self.eval(t, 1)?);
        let (_, ddphi) = split(&self.eval(t, 2)?);
        let omega = right_jacobian(&phi) * dphi;
        let alpha = right_jacobian(&phi) * ddphi + right_jacobian_rate(&phi, &dphi) * dphi;
        Ok((omega, alpha))
    }
}
