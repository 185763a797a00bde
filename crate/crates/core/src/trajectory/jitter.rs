//! Hand-held jitter: per-channel autoregressive velocity residuals plus a
//! vertical walking oscillation, fitted from recorded trajectories.
//!
//! Channels are world-frame linear velocity `(vx, vy, vz)` followed by
//! body-frame angular velocity `(wx, wy, wz)`. The recursion runs once per
//! frame of the trajectory it is applied to.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::generate::{MAX_CAMERA_HEIGHT, MIN_CAMERA_HEIGHT};
use super::{Trajectory, TrajectoryError};
use crate::geometry::{Pose, TimedPose};
use crate::rng::stream;
use crate::scene::FreeSpaceMap;

pub const JITTER_CHANNELS: usize = 6;
const JITTER_STREAM: u64 = 0x4A49_5454;
/// Pull of the jitter offset back toward the base path (1/s).
const PULL_GAIN: f64 = 2.0;
const MAX_OFFSET: f64 = 0.3;
const MAX_ROTATION_OFFSET: f64 = 0.2;
/// Divergence threshold in multiples of the stationary residual scale.
const ENVELOPE: f64 = 10.0;
const STABLE_RADIUS: f64 = 0.98;
const STEP_BAND: (f64, f64) = (1.0, 3.0);
/// Minimum share of linear-velocity variance a walking peak must explain.
const STEP_SIGNIFICANCE: f64 = 0.1;
const HIGH_PASS_SECONDS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub ar_order: usize,
    /// `ar_coefficients[k][c]` multiplies the residual of channel `c` from `k + 1` frames earlier.
    pub ar_coefficients: Vec<[f64; JITTER_CHANNELS]>,
    /// Innovation standard deviation per channel (m/s, rad/s).
    pub noise_scale: [f64; JITTER_CHANNELS],
    /// Hz; 0 disables the walking oscillation.
    pub step_frequency: f64,
    /// Peak vertical acceleration of the walking oscillation (m/s²).
    pub step_amplitude: f64,
    /// Rate of the data the model was fitted on (Hz).
    pub sample_rate: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        let (l1, l2, a1, a2) = (0.55, -0.15, 0.45, -0.1);
        Self {
            ar_order: 2,
            ar_coefficients: vec![[l1, l1, l1, a1, a1, a1], [l2, l2, l2, a2, a2, a2]],
            noise_scale: [0.04, 0.04, 0.03, 0.06, 0.06, 0.04],
            step_frequency: 1.8,
            step_amplitude: 0.8,
            sample_rate: 30.0,
        }
    }
}

fn companion_radius(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    if p == 0 {
        return 0.0;
    }
    if p == 1 || coeffs.iter().all(|a| *a == 0.0) {
        return coeffs[0].abs();
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (k, a) in coeffs.iter().enumerate() {
        m[(0, k)] = *a;
    }
    for k in 1..p {
        m[(k, k - 1)] = 1.0;
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000) {
        return schur.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    }
    // Gelfand's formula: ‖M^(2^j)‖^(1/2^j) tends to the spectral radius.
    let mut log_scale = 0.0;
    let mut power = m;
    for _ in 0..12 {
        power = &power * &power;
        let n = power.norm();
        if n == 0.0 {
            return 0.0;
        }
        power /= n;
        log_scale = 2.0 * log_scale + n.ln();
    }
    (log_scale / 4096.0).exp()
}

impl JitterModel {
    fn channel_coefficients(&self, c: usize) -> Vec<f64> {
        self.ar_coefficients.iter().map(|a| a[c]).collect()
    }

    /// Largest companion-matrix spectral radius over all channels.
    pub fn spectral_radius(&self) -> f64 {
        (0..JITTER_CHANNELS)
            .map(|c| companion_radius(&self.channel_coefficients(c)))
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.ar_coefficients.len() == self.ar_order && self.spectral_radius() < 1.0
    }

    /// Stationary standard deviation of each channel's AR process.
    pub fn stationary_std(&self) -> [f64; JITTER_CHANNELS] {
        let mut out = [0.0; JITTER_CHANNELS];
        for (c, o) in out.iter_mut().enumerate() {
            let a = self.channel_coefficients(c);
            let mut psi = vec![1.0f64];
            let mut sum = 1.0;
            for j in 1..5000 {
                let v: f64 = (1..=a.len().min(j)).map(|k| a[k - 1] * psi[j - k]).sum();
                psi.push(v);
                sum += v * v;
                if j > a.len() && v.abs() < 1e-12 && psi[j - 1].abs() < 1e-12 {
                    break;
                }
            }
            *o = self.noise_scale[c] * sum.sqrt();
        }
        out
    }
}

/// Motion added to one frame by `apply_jitter`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JitterStats {
    /// Added linear speed (m/s).
    pub added_speed: f64,
    /// Added angular speed (rad/s).
    pub added_angular_speed: f64,
    /// Distance from the base path after corrections (m).
    pub offset: f64,
}

fn offset_pose(base: &Pose, offset: &Vector3<f64>, rot: &Vector3<f64>) -> Pose {
    if *offset == Vector3::zeros() && *rot == Vector3::zeros() {
        return *base;
    }
    Pose::from_parts(
        Translation3::from(base.translation.vector + offset),
        base.rotation * UnitQuaternion::from_scaled_axis(*rot),
    )
}

/// Shrinks `offset` until the displaced camera is in free space and, when
/// the base is in the height band, stays in it.
fn fit_offset(free: &FreeSpaceMap, base: &Pose, offset: Vector3<f64>) -> Vector3<f64> {
    let p0 = Point3::from(base.translation.vector);
    let band = |z: f64| (MIN_CAMERA_HEIGHT..=MAX_CAMERA_HEIGHT).contains(&(z - free.floor_height));
    let base_in_band = band(p0.z);
    let mut o = offset;
    for _ in 0..30 {
        let p = p0 + o;
        if free.is_free(&p) && (band(p.z) || !base_in_band) {
            return o;
        }
        o *= 0.5;
    }
    Vector3::zeros()
}

fn cap(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Adds AR velocity residuals and the walking oscillation to a trajectory.
/// Offsets are pulled back toward the base path, capped at 0.3 m and
/// shrunk where they would leave free space.
pub fn apply_jitter(
    traj: &Trajectory,
    model: &JitterModel,
    free: &FreeSpaceMap,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    if traj.frames.is_empty() {
        return Err(TrajectoryError::Params("cannot jitter an empty trajectory".into()));
    }
    if !model.is_stable() {
        return Err(TrajectoryError::UnstableModel(model.spectral_radius()));
    }
    let p = model.ar_order;
    let dt = 1.0 / traj.params.frame_rate;
    let mut rng = stream(seed, &[JITTER_STREAM]);
    let phase = rng.random_range(0.0..TAU);
    let step_velocity = if model.step_frequency > 0.0 {
        model.step_amplitude / (TAU * model.step_frequency)
    } else {
        0.0
    };
    let stationary = model.stationary_std();
    let envelope = ENVELOPE * stationary.iter().map(|s| s * s).sum::<f64>().sqrt();

    let mut history: VecDeque<[f64; JITTER_CHANNELS]> = VecDeque::from(vec![[0.0; JITTER_CHANNELS]; p]);
    let mut offsets = Vec::with_capacity(traj.frames.len());
    let mut stats = Vec::with_capacity(traj.frames.len());
    let (mut o, mut theta) = (Vector3::zeros(), Vector3::zeros());
    for (i, frame) in traj.frames.iter().enumerate() {
        let mut r = [0.0; JITTER_CHANNELS];
        for (c, rc) in r.iter_mut().enumerate() {
            let ar: f64 = (0..p).map(|k| model.ar_coefficients[k][c] * history[k][c]).sum();
            let noise = if model.noise_scale[c] > 0.0 {
                model.noise_scale[c] * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            } else {
                0.0
            };
            *rc = ar + noise;
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > envelope && norm > 0.0 {
            return Err(TrajectoryError::JitterDiverged(i));
        }
        if p > 0 {
            history.pop_back();
            history.push_front(r);
        }
        let t = frame.timestamp;
        let bob = if step_velocity > 0.0 {
            step_velocity * (TAU * model.step_frequency * t + phase).sin()
        } else {
            0.0
        };
        let lin = Vector3::new(r[0], r[1], r[2] + bob);
        let ang = Vector3::new(r[3], r[4], r[5]);
        let decay = (1.0 - PULL_GAIN * dt).max(0.0);
        o = fit_offset(free, &frame.shutter_open_pose, cap((o + lin * dt) * decay, MAX_OFFSET));
        theta = cap((theta + ang * dt) * decay, MAX_ROTATION_OFFSET);
        offsets.push((o, theta));
        stats.push(JitterStats {
            added_speed: lin.norm(),
            added_angular_speed: ang.norm(),
            offset: o.norm(),
        });
    }

    let s = (traj.params.exposure() * traj.params.frame_rate).clamp(0.0, 1.0);
    let frames = traj
        .frames
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let (o0, r0) = offsets[i];
            let (o1, r1) = offsets.get(i + 1).copied().unwrap_or((o0, r0));
            let oc = fit_offset(free, &k.shutter_close_pose, o0 + (o1 - o0) * s);
            let rc = r0 + (r1 - r0) * s;
            super::Keyframe {
                timestamp: k.timestamp,
                shutter_open_pose: offset_pose(&k.shutter_open_pose, &o0, &r0),
                shutter_close_pose: offset_pose(&k.shutter_close_pose, &oc, &rc),
            }
        })
        .collect();
    Ok(Trajectory {
        params: traj.params.clone(),
        up: traj.up,
        frames,
        jitter: stats,
    })
}

/// Diagnostics from `fit_jitter_model`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Spectral radius before any stabilization.
    pub raw_spectral_radius: f64,
    /// Channels whose coefficients were shrunk into the stable region.
    pub projected_channels: Vec<usize>,
    /// Share of linear-velocity variance explained by the walking peak.
    pub step_variance_share: f64,
    pub samples: usize,
}

fn uniform_rate(seqs: &[Vec<TimedPose>]) -> Result<f64, TrajectoryError> {
    let mut periods = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        let mut dts: Vec<f64> = s.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
        dts.sort_by(f64::total_cmp);
        let median = dts[dts.len() / 2];
        if !(median > 0.0) || dts.iter().any(|d| (d - median).abs() > 0.25 * median) {
            return Err(TrajectoryError::NonUniform(i));
        }
        periods.push(s.windows(2).map(|w| w[1].timestamp - w[0].timestamp).sum::<f64>() / (s.len() - 1) as f64);
    }
    Ok(periods.len() as f64 / periods.iter().sum::<f64>())
}

/// Finite-difference velocities, one row per interval.
fn velocities(seq: &[TimedPose]) -> Vec<[f64; JITTER_CHANNELS]> {
    seq.windows(2)
        .map(|w| {
            let dt = w[1].timestamp - w[0].timestamp;
            let v = (w[1].pose.translation.vector - w[0].pose.translation.vector) / dt;
            let rel = w[0].pose.rotation.inverse() * w[1].pose.rotation;
            let a = rel.scaled_axis() / dt;
            [v.x, v.y, v.z, a.x, a.y, a.z]
        })
        .collect()
}

/// Removes a centered moving average of `window` samples from each channel.
fn high_pass(x: &[[f64; JITTER_CHANNELS]], window: usize) -> Vec<[f64; JITTER_CHANNELS]> {
    let n = x.len();
    let half = window / 2;
    let mut prefix = vec![[0.0; JITTER_CHANNELS]; n + 1];
    for i in 0..n {
        for c in 0..JITTER_CHANNELS {
            prefix[i + 1][c] = prefix[i][c] + x[i][c];
        }
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mut out = x[i];
            for c in 0..JITTER_CHANNELS {
                out[c] -= (prefix[hi][c] - prefix[lo][c]) / (hi - lo) as f64;
            }
            out
        })
        .collect()
}

/// Amplitude response of `high_pass` at `f` Hz away from the sequence ends.
fn high_pass_gain(f: f64, rate: f64, window: usize) -> f64 {
    let w = window as f64;
    let x = std::f64::consts::PI * f / rate;
    let mean = if x.sin().abs() < 1e-12 { 1.0 } else { (w * x).sin() / (w * x.sin()) };
    (1.0 - mean).abs().max(1e-6)
}

/// Least-squares sine and cosine coefficients of `x` at frequency `f`.
fn fit_sinusoid(x: &[f64], f: f64, rate: f64) -> (f64, f64) {
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let (s, c) = (TAU * f * n as f64 / rate).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    if det.abs() < 1e-12 {
        return (0.0, 0.0);
    }
    ((xs * cc - xc * sc) / det, (xc * ss - xs * sc) / det)
}

/// Fits a jitter model to uniformly sampled pose sequences.
pub fn fit_jitter_model(seqs: &[Vec<TimedPose>], ar_order: usize) -> Result<(JitterModel, FitReport), TrajectoryError> {
    if ar_order == 0 {
        return Err(TrajectoryError::InsufficientData("ar_order must be >= 1".into()));
    }
    if seqs.is_empty() {
        return Err(TrajectoryError::InsufficientData("no sequences".into()));
    }
    let min_len = (10 * ar_order).max(3) + 1;
    if let Some((i, s)) = seqs.iter().enumerate().find(|(_, s)| s.len() < min_len) {
        return Err(TrajectoryError::InsufficientData(format!(
            "sequence {i} has {} poses, need at least {min_len}",
            s.len()
        )));
    }
    let rate = uniform_rate(seqs)?;
    let window = 2 * (HIGH_PASS_SECONDS * rate / 2.0).round() as usize + 1;
    let mut residuals: Vec<Vec<[f64; JITTER_CHANNELS]>> =
        seqs.iter().map(|s| high_pass(&velocities(s), window)).collect();

    // Walking peak: summed linear-velocity power over a fine frequency grid.
    let grid: Vec<f64> = (0..=200).map(|i| STEP_BAND.0 + (STEP_BAND.1 - STEP_BAND.0) * i as f64 / 200.0).collect();
    let nyquist = rate / 2.0;
    let mut best = (0.0, f64::NAN);
    for &f in grid.iter().filter(|&&f| f < nyquist) {
        let mut power = 0.0;
        for r in &residuals {
            for c in 0..3 {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, row) in r.iter().enumerate() {
                    let (s, co) = (TAU * f * n as f64 / rate).sin_cos();
                    re += row[c] * co;
                    im += row[c] * s;
                }
                power += re * re + im * im;
            }
        }
        if power > best.0 {
            best = (power, f);
        }
    }
    let total_var: f64 = residuals.iter().flatten().map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sum();
    let (mut explained, mut amp_sum, mut amp_weight) = (0.0, 0.0, 0.0);
    let mut sinusoids = Vec::new();
    if best.1.is_finite() && total_var > 0.0 {
        for r in &residuals {
            let mut coeffs = [(0.0, 0.0); 3];
            for (c, co) in coeffs.iter_mut().enumerate() {
                let x: Vec<f64> = r.iter().map(|row| row[c]).collect();
                *co = fit_sinusoid(&x, best.1, rate);
            }
            let amp2: f64 = coeffs.iter().map(|(a, b)| a * a + b * b).sum();
            explained += 0.5 * amp2 * r.len() as f64;
            amp_sum += amp2.sqrt() * r.len() as f64;
            amp_weight += r.len() as f64;
            sinusoids.push(coeffs);
        }
    }
    let share = if total_var > 0.0 { explained / total_var } else { 0.0 };
    let significant = share > STEP_SIGNIFICANCE;
    let (step_frequency, step_amplitude) = if significant {
        for (r, coeffs) in residuals.iter_mut().zip(&sinusoids) {
            for (n, row) in r.iter_mut().enumerate() {
                let (s, co) = (TAU * best.1 * n as f64 / rate).sin_cos();
                for c in 0..3 {
                    row[c] -= coeffs[c].0 * s + coeffs[c].1 * co;
                }
            }
        }
        (best.1, TAU * best.1 * amp_sum / amp_weight / high_pass_gain(best.1, rate, window))
    } else {
        (0.0, 0.0)
    };

    let p = ar_order;
    let mut coefficients = vec![[0.0; JITTER_CHANNELS]; p];
    let mut noise = [0.0; JITTER_CHANNELS];
    let mut raw_radius: f64 = 0.0;
    let mut projected = Vec::new();
    let samples: usize = residuals.iter().map(|r| r.len().saturating_sub(p)).sum();
    for c in 0..JITTER_CHANNELS {
        let mut x = DMatrix::<f64>::zeros(samples, p);
        let mut y = DVector::<f64>::zeros(samples);
        let mut row = 0;
        for r in &residuals {
            for n in p..r.len() {
                for k in 0..p {
                    x[(row, k)] = r[n - 1 - k][c];
                }
                y[row] = r[n][c];
                row += 1;
            }
        }
        let scale = y.amax();
        let mut a: Vec<f64> = if scale > 1e-12 {
            let svd = (x.transpose() * &x).svd(true, true);
            let sol = svd.solve(&(x.transpose() * &y), 1e-12 * scale * scale).unwrap_or(DVector::zeros(p));
            sol.iter().copied().collect()
        } else {
            vec![0.0; p]
        };
        let rho = companion_radius(&a);
        raw_radius = raw_radius.max(rho);
        if rho >= 1.0 {
            let f = STABLE_RADIUS / rho;
            for (k, ak) in a.iter_mut().enumerate() {
                *ak *= f.powi(k as i32 + 1);
            }
            projected.push(c);
        }
        let resid = &y - &x * DVector::from_vec(a.clone());
        noise[c] = if samples > 0 { (resid.norm_squared() / samples as f64).sqrt() } else { 0.0 };
        for k in 0..p {
            coefficients[k][c] = a[k];
        }
    }

    let model = JitterModel {
        ar_order: p,
        ar_coefficients: coefficients,
        noise_scale: noise,
        step_frequency,
        step_amplitude,
        sample_rate: rate,
    };
    let report = FitReport {
        raw_spectral_radius: raw_radius,
        projected_channels: projected,
        step_variance_share: share,
        samples,
    };
    Ok((model, report))
}
