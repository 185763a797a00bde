use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use roomgen::geometry::{Pose, TimedPose};
use roomgen::scene::{compute_free_space, load_scene, FreeSpaceMap};
use roomgen::trajectory::{
    apply_jitter, fit_jitter_model, generate_trajectory, read_trajectory, sample_params, trajectory_from_str,
    trajectory_to_string, write_trajectory, JitterModel, Trajectory, TrajectoryError, TrajectoryParams,
    TrajectoryType, JITTER_CHANNELS, MAX_TILT,
};

fn free_space() -> FreeSpaceMap {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/scenes/toy_room/scene.toml");
    compute_free_space(&load_scene(&p).unwrap(), 0.1).unwrap()
}

const TYPES: [TrajectoryType; 3] = [TrajectoryType::TwoBody, TrajectoryType::HandHeld, TrajectoryType::LookForward];

fn position(p: &Pose) -> Point3<f64> {
    Point3::from(p.translation.vector)
}

fn forward(p: &Pose) -> Vector3<f64> {
    p.rotation * Vector3::z()
}

fn check_invariants(free: &FreeSpaceMap, traj: &Trajectory) {
    assert!(traj.up_tilt() <= MAX_TILT + 1e-9);
    for (i, k) in traj.frames.iter().enumerate() {
        for pose in [&k.shutter_open_pose, &k.shutter_close_pose] {
            let p = position(pose);
            let h = p.z - free.floor_height;
            assert!((1.0..=2.0).contains(&h), "frame {i} height {h}");
            assert!(free.is_free(&p), "frame {i} at {p:?} is occupied");
            // Camera x axis is horizontal with respect to the tilted up vector.
            let x = pose.rotation * Vector3::x();
            assert!(x.dot(&traj.up).abs() < 1e-9);
            if traj.params.traj_type == TrajectoryType::HandHeld {
                assert!(forward(pose).z < 0.0, "frame {i} looks up");
            }
        }
    }
}

#[test]
fn invariants_hold_across_seeds_and_types() {
    let free = free_space();
    for seed in 0..20u64 {
        for (ti, &t) in TYPES.iter().enumerate() {
            let v = 0.5 + 4.5 * ((seed * 7 + ti as u64) % 10) as f64 / 9.0;
            let params = TrajectoryParams::new(t, v, 0.5 + (seed % 6) as f64 * 0.5, 8.0, seed);
            let traj = generate_trajectory(&free, &params).unwrap();
            assert_eq!(traj.frames.len(), 200);
            check_invariants(&free, &traj);
        }
    }
}

#[test]
fn forty_seconds_at_25_hz_is_1000_frames() {
    let free = free_space();
    let params = TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 40.0, 3);
    let traj = generate_trajectory(&free, &params).unwrap();
    assert_eq!(traj.frames.len(), 1000);
    for (i, k) in traj.frames.iter().enumerate() {
        assert!((k.timestamp - i as f64 / 25.0).abs() < 1e-12);
    }
    assert!(traj.frames.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
    assert_eq!(params.exposure(), 0.02);
}

#[test]
fn generation_is_deterministic() {
    let free = free_space();
    let params = TrajectoryParams::new(TrajectoryType::LookForward, 2.0, 1.5, 4.0, 99);
    assert_eq!(generate_trajectory(&free, &params).unwrap(), generate_trajectory(&free, &params).unwrap());
    let other = TrajectoryParams { seed: 100, ..params.clone() };
    assert_ne!(generate_trajectory(&free, &params).unwrap(), generate_trajectory(&free, &other).unwrap());
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn look_forward_views_along_velocity() {
    let free = free_space();
    for (seed, v, w) in [(1u64, 1.0, 1.0), (2, 0.5, 0.5), (3, 3.0, 2.0), (4, 5.0, 3.0)] {
        let params = TrajectoryParams::new(TrajectoryType::LookForward, v, w, 40.0, seed);
        let traj = generate_trajectory(&free, &params).unwrap();
        let e = params.exposure();
        let angles: Vec<f64> = traj
            .frames
            .iter()
            .filter_map(|k| {
                let vel = (position(&k.shutter_close_pose) - position(&k.shutter_open_pose)) / e;
                let vel = vel.try_normalize(1e-9)?;
                Some(forward(&k.shutter_open_pose).dot(&vel).clamp(-1.0, 1.0).acos())
            })
            .collect();
        assert!(angles.len() > 900);
        let m = median(angles);
        assert!(m < 30f64.to_radians(), "seed {seed}: median {} deg", m.to_degrees());
    }
}

#[test]
fn hand_held_always_looks_down() {
    let free = free_space();
    for seed in 0..10 {
        let params = TrajectoryParams::new(TrajectoryType::HandHeld, 4.0, 3.0, 20.0, seed);
        let traj = generate_trajectory(&free, &params).unwrap();
        assert!(traj.frames.iter().all(|k| forward(&k.shutter_open_pose).z < 0.0));
    }
}

#[test]
fn bad_params_are_rejected() {
    let free = free_space();
    let fractional = TrajectoryParams {
        duration: 1.01,
        ..TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 1.0, 0)
    };
    assert!(matches!(generate_trajectory(&free, &fractional), Err(TrajectoryError::Params(_))));
    let long_exposure = TrajectoryParams {
        exposure: Some(0.05),
        ..TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 1.0, 0)
    };
    assert!(generate_trajectory(&free, &long_exposure).is_err());
}

#[test]
fn no_free_band_is_an_error() {
    let mut free = free_space();
    free.occupancy.iter_mut().for_each(|c| *c = true);
    let params = TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 1.0, 0);
    assert_eq!(generate_trajectory(&free, &params), Err(TrajectoryError::NoFreeSpace));
}

/// Two-sided Kolmogorov–Smirnov statistic against U[lo, hi].
fn ks_uniform(mut x: Vec<f64>, lo: f64, hi: f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = (v - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn sampled_params_are_uniform() {
    let draws: Vec<TrajectoryParams> = (0..10_000).map(sample_params).collect();
    let v: Vec<f64> = draws.iter().map(|p| p.v_mult).collect();
    let w: Vec<f64> = draws.iter().map(|p| p.w_mult).collect();
    assert!(v.iter().all(|&x| (0.5..=5.0).contains(&x)));
    assert!(w.iter().all(|&x| (0.5..=3.0).contains(&x)));
    // Critical value at α = 0.01 for n = 10 000.
    let crit = 1.628 / 100.0;
    assert!(ks_uniform(v, 0.5, 5.0) < crit);
    assert!(ks_uniform(w, 0.5, 3.0) < crit);
    for t in TYPES {
        let share = draws.iter().filter(|p| p.traj_type == t).count() as f64 / 10_000.0;
        assert!((share - 1.0 / 3.0).abs() < 0.03, "{t}: {share}");
    }
    assert_eq!(sample_params(42), sample_params(42));
    assert_eq!(draws[0].duration * draws[0].frame_rate, 1000.0);
}

#[test]
fn file_round_trip() {
    let free = free_space();
    let params = TrajectoryParams::new(TrajectoryType::HandHeld, 1.3, 2.1, 2.0, 5);
    let traj = generate_trajectory(&free, &params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.txt");
    write_trajectory(&traj, &path).unwrap();
    let back = read_trajectory(&path).unwrap();
    assert_eq!(back.params, traj.params);
    assert_eq!(back.up, traj.up);
    assert_eq!(back.frames.len(), traj.frames.len());
    for (a, b) in traj.frames.iter().zip(&back.frames) {
        assert_eq!(a.timestamp, b.timestamp);
        for (p, q) in [(&a.shutter_open_pose, &b.shutter_open_pose), (&a.shutter_close_pose, &b.shutter_close_pose)] {
            assert_eq!(p.translation, q.translation);
            assert!(p.rotation.angle_to(&q.rotation) < 1e-12);
        }
    }
    let text = trajectory_to_string(&back);
    assert_eq!(trajectory_to_string(&trajectory_from_str(&text).unwrap()).lines().count(), text.lines().count());
    assert!(matches!(
        trajectory_from_str("# type 1\nO 0 1 2 3\n"),
        Err(TrajectoryError::Parse { line: 2, .. })
    ));
    assert!(trajectory_from_str("# type 7\n").is_err());
}

fn zero_model() -> JitterModel {
    JitterModel {
        noise_scale: [0.0; JITTER_CHANNELS],
        step_amplitude: 0.0,
        ..JitterModel::default()
    }
}

#[test]
fn zero_jitter_is_identity() {
    let free = free_space();
    let traj = generate_trajectory(&free, &TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 4.0, 1)).unwrap();
    let out = apply_jitter(&traj, &zero_model(), &free, 3).unwrap();
    assert_eq!(out.frames, traj.frames);
    assert_eq!(out.jitter.len(), traj.frames.len());
}

/// Spectral energy of `x` above `cutoff` Hz (mean removed).
fn high_frequency_energy(x: &[f64], rate: f64, cutoff: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (1..n / 2)
        .filter(|&k| k as f64 * rate / n as f64 > cutoff)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let a = TAU * (k * j) as f64 / n as f64;
                re += (v - mean) * a.cos();
                im += (v - mean) * a.sin();
            }
            re * re + im * im
        })
        .sum()
}

fn speeds(traj: &Trajectory) -> Vec<f64> {
    traj.frames
        .windows(2)
        .map(|w| (position(&w[1].shutter_open_pose) - position(&w[0].shutter_open_pose)).norm() * traj.params.frame_rate)
        .collect()
}

#[test]
fn default_jitter_adds_high_frequency_motion() {
    let free = free_space();
    for seed in 0..5 {
        let traj =
            generate_trajectory(&free, &TrajectoryParams::new(TrajectoryType::LookForward, 1.0, 1.0, 20.0, seed)).unwrap();
        let out = apply_jitter(&traj, &JitterModel::default(), &free, seed).unwrap();
        let base = high_frequency_energy(&speeds(&traj), 25.0, 1.0);
        let jittered = high_frequency_energy(&speeds(&out), 25.0, 1.0);
        assert!(jittered > base, "seed {seed}: {jittered} <= {base}");
    }
}

#[test]
fn jittered_paths_stay_free_and_close() {
    let free = free_space();
    for seed in 0..100u64 {
        let t = TYPES[seed as usize % 3];
        let traj = generate_trajectory(&free, &TrajectoryParams::new(t, 2.0, 1.0, 4.0, seed)).unwrap();
        let out = apply_jitter(&traj, &JitterModel::default(), &free, seed).unwrap();
        for (a, b) in traj.frames.iter().zip(&out.frames) {
            for (p, q) in [(&a.shutter_open_pose, &b.shutter_open_pose), (&a.shutter_close_pose, &b.shutter_close_pose)] {
                assert!(free.is_free(&position(q)));
                assert!((position(p) - position(q)).norm() <= 0.3 + 1e-12);
            }
        }
    }
}

#[test]
fn unstable_model_is_rejected() {
    let free = free_space();
    let traj = generate_trajectory(&free, &TrajectoryParams::new(TrajectoryType::TwoBody, 1.0, 1.0, 1.0, 1)).unwrap();
    let model = JitterModel {
        ar_order: 1,
        ar_coefficients: vec![[1.2; JITTER_CHANNELS]],
        ..JitterModel::default()
    };
    assert!(matches!(apply_jitter(&traj, &model, &free, 0), Err(TrajectoryError::UnstableModel(r)) if (r - 1.2).abs() < 1e-12));
}

/// Poses whose finite-difference velocities are exactly `vel`.
fn integrate(vel: &[[f64; 6]], rate: f64) -> Vec<TimedPose> {
    let mut pose = Pose::identity();
    let mut out = vec![TimedPose::new(0.0, pose)];
    for (i, v) in vel.iter().enumerate() {
        let dt = 1.0 / rate;
        pose = Pose::from_parts(
            (pose.translation.vector + Vector3::new(v[0], v[1], v[2]) * dt).into(),
            pose.rotation * nalgebra::UnitQuaternion::from_scaled_axis(Vector3::new(v[3], v[4], v[5]) * dt),
        );
        out.push(TimedPose::new((i + 1) as f64 / rate, pose));
    }
    out
}

#[test]
fn ar2_coefficients_are_recovered() {
    let (a1, a2) = (0.6, -0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut vel = vec![[0.0f64; 6]; 2];
    for n in 2..10_002 {
        let mut row = [0.0; 6];
        for c in 0..6 {
            row[c] = a1 * vel[n - 1][c] + a2 * vel[n - 2][c] + normal.sample(&mut rng);
        }
        vel.push(row);
    }
    let poses = integrate(&vel[2..], 100.0);
    let (model, report) = fit_jitter_model(&[poses], 2).unwrap();
    assert!(report.projected_channels.is_empty());
    for c in 0..6 {
        let (f1, f2) = (model.ar_coefficients[0][c], model.ar_coefficients[1][c]);
        let rel = (f1 - a1).hypot(f2 - a2) / a1.hypot(a2);
        assert!(rel <= 0.05, "channel {c}: ({f1}, {f2}) off by {rel}");
        assert!((model.noise_scale[c] - 0.05).abs() < 0.005);
    }
    assert!((model.sample_rate - 100.0).abs() < 1e-6);
    assert!(model.is_stable());
}

#[test]
fn constant_velocity_fits_to_silence() {
    let vel = vec![[0.4, -0.1, 0.0, 0.0, 0.0, 0.2]; 600];
    let (model, _) = fit_jitter_model(&[integrate(&vel, 30.0)], 3).unwrap();
    assert!(model.noise_scale.iter().all(|s| *s < 1e-9), "{:?}", model.noise_scale);
    assert!(model.step_amplitude < 1e-9);
}

#[test]
fn walking_oscillation_is_detected() {
    let rate = 30.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 0.02).unwrap();
    let vel: Vec<[f64; 6]> = (0..1800)
        .map(|n| {
            let t = n as f64 / rate;
            let bob = 0.08 * (TAU * 1.7 * t).sin();
            [0.9, normal.sample(&mut rng), bob + normal.sample(&mut rng), 0.0, 0.0, 0.05 * (PI * t).sin()]
        })
        .collect();
    let (model, report) = fit_jitter_model(&[integrate(&vel, rate)], 2).unwrap();
    assert!((model.step_frequency - 1.7).abs() < 0.02, "{}", model.step_frequency);
    assert!((model.step_amplitude - TAU * 1.7 * 0.08).abs() < 0.05 * TAU * 1.7 * 0.08, "{}", model.step_amplitude);
    assert!(report.step_variance_share > 0.1);
}

#[test]
fn fit_rejects_bad_input() {
    assert!(matches!(fit_jitter_model(&[], 2), Err(TrajectoryError::InsufficientData(_))));
    let short = integrate(&vec![[0.0; 6]; 10], 30.0);
    assert!(matches!(fit_jitter_model(&[short], 2), Err(TrajectoryError::InsufficientData(_))));
    let mut uneven = integrate(&vec![[0.1; 6]; 100], 30.0);
    uneven[50].timestamp += 0.02;
    assert_eq!(fit_jitter_model(&[uneven], 2), Err(TrajectoryError::NonUniform(0)));
}

#[test]
fn unstable_fit_is_projected() {
    // An explosive AR(1) velocity sequence cannot be fitted stably.
    let mut v = 0.01;
    let vel: Vec<[f64; 6]> = (0..400)
        .map(|_| {
            v *= 1.05;
            [v, v, v, v, v, v]
        })
        .collect();
    let (model, report) = fit_jitter_model(&[integrate(&vel, 25.0)], 1).unwrap();
    assert!(report.raw_spectral_radius >= 1.0, "{}", report.raw_spectral_radius);
    assert!(!report.projected_channels.is_empty());
    assert!(model.is_stable());
    assert!((model.spectral_radius() - 0.98).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_seed_respects_height_and_tilt(seed in any::<u64>(), t in 0usize..3, v in 0.5f64..5.0, w in 0.5f64..3.0) {
        let free = free_space();
        let traj = generate_trajectory(&free, &TrajectoryParams::new(TYPES[t], v, w, 2.0, seed)).unwrap();
        prop_assert!(traj.up_tilt() <= MAX_TILT + 1e-9);
        for k in &traj.frames {
            let p = position(&k.shutter_open_pose);
            prop_assert!((1.0..=2.0).contains(&(p.z - free.floor_height)));
            prop_assert!(free.is_free(&p));
        }
    }
}
