use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{split, PoseSpline, SplineError};
use crate::geometry::{rotation_from_vector, Pose};
use crate::rng::stream;

const IMU_STREAM: u64 = 0x494D_5500;
pub const DEFAULT_IMU_RATE: f64 = 800.0;
const CSV_HEADER: &str = "#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],w_RS_S_z [rad s^-1],\
a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]";

/// Continuous-time densities of white noise and bias random walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s²/√Hz
    pub gyro_bias_walk: f64,
    /// m/s³/√Hz
    pub accel_bias_walk: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ImuNoise {
    pub fn validate(&self) -> Result<(), SplineError> {
        let fields = [
            ("gyro_noise_density", self.gyro_noise_density),
            ("accel_noise_density", self.accel_noise_density),
            ("gyro_bias_walk", self.gyro_bias_walk),
            ("accel_bias_walk", self.accel_bias_walk),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SplineError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuConfig {
    /// Hz
    pub rate: f64,
    /// m/s²
    pub gravity_world: Vector3<f64>,
    /// Maps camera-frame coordinates to IMU-frame coordinates.
    pub imu_from_camera: Pose,
    pub noise: Option<ImuNoise>,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            rate: DEFAULT_IMU_RATE,
            gravity_world: Vector3::new(0.0, 0.0, -9.81),
            imu_from_camera: Pose::identity(),
            noise: None,
        }
    }
}

impl ImuConfig {
    pub fn validate(&self) -> Result<(), SplineError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(SplineError::Config(format!("rate must be > 0, got {}", self.rate)));
        }
        if !self.gravity_world.iter().all(|g| g.is_finite()) {
            return Err(SplineError::Config("gravity must be finite".into()));
        }
        self.noise.as_ref().map_or(Ok(()), ImuNoise::validate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub timestamp: f64,
    /// Body angular velocity (rad/s).
    pub gyro: Vector3<f64>,
    /// Specific force in the body frame (m/s²).
    pub accel: Vector3<f64>,
}

/// Gyro and accelerometer readings at every multiple of `1/rate` inside the
/// spline span. Noise is added when the config carries a noise model.
pub fn synthesize_imu(spline: &PoseSpline, config: &ImuConfig) -> Result<Vec<ImuSample>, SplineError> {
    config.validate()?;
    let (start, end) = (spline.start(), spline.end());
    if end - start < 1.0 / config.rate {
        return Err(SplineError::Config(format!(
            "spline span {} s is shorter than one IMU period",
            end - start
        )));
    }
    let first = (start * config.rate - 1e-6).ceil() as i64;
    let last = (end * config.rate + 1e-6).floor() as i64;
    // Camera-from-IMU lever arm and rotation.
    let camera_from_imu = config.imu_from_camera.inverse();
    let lever = camera_from_imu.translation.vector;
    let r_ic = config.imu_from_camera.rotation;
    let samples = (first..=last)
        .map(|k| {
            let t = k as f64 / config.rate;
            let (_, phi) = split(&spline.eval(t, 0)?);
            let (acc_w, _) = split(&spline.eval(t, 2)?);
            let (omega, alpha) = spline.body_rates(t)?;
            let r_wc = rotation_from_vector(&phi);
            // Acceleration of the IMU origin, which sits at `lever` in the camera frame.
            let acc_imu_w = acc_w + r_wc * (omega.cross(&omega.cross(&lever)) + alpha.cross(&lever));
            let specific_c = r_wc.inverse() * (acc_imu_w - config.gravity_world);
            Ok(ImuSample {
                timestamp: t,
                gyro: r_ic * omega,
                accel: r_ic * specific_c,
            })
        })
        .collect::<Result<Vec<_>, SplineError>>()?;
    Ok(match &config.noise {
        Some(noise) => add_imu_noise(&samples, noise),
        None => samples,
    })
}

fn normal3(rng: &mut rand_chacha::ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Adds white noise with std `density/√Δt` and a bias random walk integrated
/// at the sample period. Deterministic given `noise.seed`.
pub fn add_imu_noise(samples: &[ImuSample], noise: &ImuNoise) -> Vec<ImuSample> {
    if samples.len() < 2 {
        return samples.to_vec();
    }
    let dt = (samples[samples.len() - 1].timestamp - samples[0].timestamp) / (samples.len() - 1) as f64;
    let mut rng = stream(noise.seed, &[IMU_STREAM]);
    let (mut gyro_bias, mut accel_bias) = (Vector3::zeros(), Vector3::zeros());
    let white = dt.sqrt().recip();
    let walk = dt.sqrt();
    samples
        .iter()
        .map(|s| {
            let out = ImuSample {
                timestamp: s.timestamp,
                gyro: s.gyro + gyro_bias + normal3(&mut rng) * (noise.gyro_noise_density * white),
                accel: s.accel + accel_bias + normal3(&mut rng) * (noise.accel_noise_density * white),
            };
            gyro_bias += normal3(&mut rng) * (noise.gyro_bias_walk * walk);
            accel_bias += normal3(&mut rng) * (noise.accel_bias_walk * walk);
            out
        })
        .collect()
}

/// EuRoC-style CSV: `timestamp_ns, gyro xyz, accel xyz`.
pub fn imu_to_csv(samples: &[ImuSample]) -> String {
    let mut s = String::with_capacity(samples.len() * 120);
    let _ = writeln!(s, "{CSV_HEADER}");
    for m in samples {
        let ns = (m.timestamp * 1e9).round() as i64;
        let _ = writeln!(
            s,
            "{ns},{},{},{},{},{},{}",
            m.gyro.x, m.gyro.y, m.gyro.z, m.accel.x, m.accel.y, m.accel.z
        );
    }
    s
}

pub fn imu_from_csv(text: &str) -> Result<Vec<ImuSample>, SplineError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(SplineError::Parse {
                line,
                message: format!("expected 7 fields, found {}", f.len()),
            });
        }
        let bad = |tok: &str| SplineError::Parse {
            line,
            message: format!("'{tok}' is not a number"),
        };
        let ns: i64 = f[0].parse().map_err(|_| bad(f[0]))?;
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
            .collect::<Result<_, _>>()?;
        out.push(ImuSample {
            timestamp: ns as f64 / 1e9,
            gyro: Vector3::new(v[0], v[1], v[2]),
            accel: Vector3::new(v[3], v[4], v[5]),
        });
    }
    Ok(out)
}

pub fn write_imu_csv(samples: &[ImuSample], path: &Path) -> Result<(), SplineError> {
    std::fs::write(path, imu_to_csv(samples)).map_err(|e| SplineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, SplineError> {
    let text = std::fs::read_to_string(path).map_err(|e| SplineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    imu_from_csv(&text)
}
