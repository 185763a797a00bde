//! Random camera trajectories inside scene free space and AR-based
//! hand-held jitter.

mod generate;
mod io;
mod jitter;

use std::fmt;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, TimedPose};
use crate::rng::stream;

pub use generate::{generate_trajectory, MAX_CAMERA_HEIGHT, MAX_TILT, MIN_CAMERA_HEIGHT, SUBSTEPS_PER_FRAME};
pub use io::{read_trajectory, trajectory_from_str, trajectory_to_string, write_trajectory};
pub use jitter::{apply_jitter, fit_jitter_model, FitReport, JitterModel, JitterStats, JITTER_CHANNELS};

pub const V_MULT_RANGE: (f64, f64) = (0.5, 5.0);
pub const W_MULT_RANGE: (f64, f64) = (0.5, 3.0);
const PARAMS_STREAM: u64 = 0x5041_5241;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid trajectory parameters: {0}")]
    Params(String),
    #[error("no free space between 1 m and 2 m above the floor")]
    NoFreeSpace,
    #[error("constraints unreachable: {0}")]
    Unreachable(String),
    #[error("jitter model is unstable (companion spectral radius {0:.4})")]
    UnstableModel(f64),
    #[error("jitter diverged at frame {0}")]
    JitterDiverged(usize),
    #[error("insufficient data for fitting: {0}")]
    InsufficientData(String),
    #[error("timestamps are not uniformly spaced in sequence {0}")]
    NonUniform(usize),
    #[error("trajectory file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum TrajectoryType {
    /// Two bodies (camera and look-at point) moving at random.
    TwoBody = 1,
    /// Like `TwoBody` with the look-at point kept below the camera.
    HandHeld = 2,
    /// Look-at point pulled toward the direction of travel.
    LookForward = 3,
}

impl TryFrom<u8> for TrajectoryType {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Self::TwoBody),
            2 => Ok(Self::HandHeld),
            3 => Ok(Self::LookForward),
            _ => Err(format!("trajectory type must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<TrajectoryType> for u8 {
    fn from(t: TrajectoryType) -> u8 {
        t as u8
    }
}

impl fmt::Display for TrajectoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryParams {
    pub traj_type: TrajectoryType,
    pub v_mult: f64,
    pub w_mult: f64,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Shutter open time in seconds; half the frame period when absent.
    #[serde(default)]
    pub exposure: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_frame_rate() -> f64 {
    25.0
}

impl TrajectoryParams {
    pub fn new(traj_type: TrajectoryType, v_mult: f64, w_mult: f64, duration: f64, seed: u64) -> Self {
        Self {
            traj_type,
            v_mult,
            w_mult,
            duration,
            frame_rate: default_frame_rate(),
            exposure: None,
            seed,
        }
    }

    pub fn exposure(&self) -> f64 {
        self.exposure.unwrap_or(0.5 / self.frame_rate)
    }

    /// `duration · frame_rate`, which must be a whole number.
    pub fn frame_count(&self) -> Result<usize, TrajectoryError> {
        let n = self.duration * self.frame_rate;
        let r = n.round();
        if !(r >= 1.0) || (n - r).abs() > 1e-6 * r.max(1.0) {
            return Err(TrajectoryError::Params(format!(
                "duration {} s at {} Hz is not a whole number of frames",
                self.duration, self.frame_rate
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::Params(m));
        if !(self.v_mult > 0.0 && self.v_mult.is_finite()) {
            return bad(format!("v_mult must be > 0, got {}", self.v_mult));
        }
        if !(self.w_mult > 0.0 && self.w_mult.is_finite()) {
            return bad(format!("w_mult must be > 0, got {}", self.w_mult));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!("frame_rate must be > 0, got {}", self.frame_rate));
        }
        let e = self.exposure();
        if !(e >= 0.0 && e < 1.0 / self.frame_rate) {
            return bad(format!("exposure {e} s must be in [0, frame period)"));
        }
        self.frame_count().map(|_| ())
    }
}

/// Draws a trajectory type and speed multipliers for a 40 s, 25 Hz trajectory.
pub fn sample_params(seed: u64) -> TrajectoryParams {
    let mut rng = stream(seed, &[PARAMS_STREAM]);
    let traj_type = match rng.random_range(0..3) {
        0 => TrajectoryType::TwoBody,
        1 => TrajectoryType::HandHeld,
        _ => TrajectoryType::LookForward,
    };
    let v_mult = rng.random_range(V_MULT_RANGE.0..=V_MULT_RANGE.1);
    let w_mult = rng.random_range(W_MULT_RANGE.0..=W_MULT_RANGE.1);
    TrajectoryParams::new(traj_type, v_mult, w_mult, 40.0, seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keyframe {
    pub timestamp: f64,
    pub shutter_open_pose: Pose,
    pub shutter_close_pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: TrajectoryParams,
    /// Tilted up vector the camera roll is referenced to, fixed per trajectory.
    pub up: Vector3<f64>,
    pub frames: Vec<Keyframe>,
    /// Per-frame added motion, present after `apply_jitter`.
    pub jitter: Vec<JitterStats>,
}

impl Trajectory {
    pub fn open_poses(&self) -> Vec<TimedPose> {
        self.frames
            .iter()
            .map(|k| TimedPose::new(k.timestamp, k.shutter_open_pose))
            .collect()
    }

    /// Open and close poses merged in time order.
    pub fn all_poses(&self) -> Vec<TimedPose> {
        let e = self.params.exposure();
        let mut out = Vec::with_capacity(2 * self.frames.len());
        for k in &self.frames {
            out.push(TimedPose::new(k.timestamp, k.shutter_open_pose));
            if e > 0.0 {
                out.push(TimedPose::new(k.timestamp + e, k.shutter_close_pose));
            }
        }
        out
    }

    /// Angle between the trajectory up vector and world +z (radians).
    pub fn up_tilt(&self) -> f64 {
        self.up.normalize().z.clamp(-1.0, 1.0).acos()
    }
}
