//! One sequence from a job description: scene load, optional scene change,
//! trajectory, spline, rendering, IMU, events and the sequence directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{CameraInfo, Configuration, SequenceInfo, SequenceManifest, SequenceWriter};
use crate::events::{Event, EventConfig, EventEmulator, IntensityFrame};
use crate::geometry::Pose;
use crate::render::{
    apply_kinect_noise, build_bvh, compute_flow, midpoint_pose, render_frame, render_rgb, Bvh, KinectNoise, Lens,
    RenderSettings,
};
use crate::rng::derive_seed;
use crate::scene::{compute_free_space, load_scene, Scene};
use crate::scene_change::{randomize_lighting, rearrange, LightingConfig, RearrangeConfig};
use crate::spline::{fit_spline, synthesize_imu, ImuConfig, ImuSample, PoseSpline};
use crate::trajectory::{
    apply_jitter, generate_trajectory, read_trajectory, sample_params, JitterModel, Trajectory, TrajectoryParams,
};

const SCENE_CHANGE_STREAM: u64 = 0x5343_4847;
const TRAJECTORY_STREAM: u64 = 0x5452_4A53;
const JITTER_STREAM: u64 = 0x4A49_5454;
const RENDER_STREAM: u64 = 0x524E_4452;
const KINECT_STREAM: u64 = 0x4B4E_4354;
const IMU_NOISE_STREAM: u64 = 0x494D_554E;
const EVENT_RENDER_STREAM: u64 = 0x4556_4E54;
/// Event-frame progress is reported this many times per run.
const EVENT_PROGRESS_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Scene,
    SceneChange,
    Trajectory,
    Spline,
    Render,
    Imu,
    Events,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("unknown"))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn fail<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorToggles {
    pub imu: bool,
    pub events: bool,
    pub depth_noise: bool,
}

impl Default for SensorToggles {
    fn default() -> Self {
        Self {
            imu: true,
            events: false,
            depth_noise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub scene: PathBuf,
    #[serde(default = "default_configuration")]
    pub configuration: Configuration,
    /// Generated trajectory parameters; sampled from the seed when neither
    /// these nor `trajectory_file` are given.
    #[serde(default)]
    pub trajectory: Option<TrajectoryParams>,
    #[serde(default)]
    pub trajectory_file: Option<PathBuf>,
    /// Adds hand-held jitter from the default model.
    #[serde(default)]
    pub jitter: bool,
    #[serde(default)]
    pub render: RenderSettings,
    #[serde(default)]
    pub lens: Lens,
    #[serde(default)]
    pub sensors: SensorToggles,
    #[serde(default)]
    pub imu: ImuConfig,
    #[serde(default)]
    pub events: EventConfig,
    /// Samples per pixel for the high-rate event renders.
    #[serde(default = "default_event_spp")]
    pub event_spp: u32,
    #[serde(default)]
    pub kinect: KinectNoise,
    #[serde(default)]
    pub rearrange: RearrangeConfig,
    #[serde(default)]
    pub lighting: LightingConfig,
    /// Free-space grid cell size (m).
    #[serde(default = "default_cell")]
    pub free_space_cell: f64,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_configuration() -> Configuration {
    Configuration::Original
}

fn default_event_spp() -> u32 {
    4
}

fn default_cell() -> f64 {
    0.1
}

impl JobConfig {
    pub fn new(scene: &Path, output: &Path, seed: u64) -> Self {
        Self {
            scene: scene.to_path_buf(),
            configuration: Configuration::Original,
            trajectory: None,
            trajectory_file: None,
            jitter: false,
            render: RenderSettings::default(),
            lens: Lens::default(),
            sensors: SensorToggles::default(),
            imu: ImuConfig::default(),
            events: EventConfig::default(),
            event_spp: default_event_spp(),
            kinect: KinectNoise::default(),
            rearrange: RearrangeConfig::default(),
            lighting: LightingConfig::default(),
            free_space_cell: default_cell(),
            output: output.to_path_buf(),
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(fail(Stage::Config))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| {
            Err(PipelineError {
                stage: Stage::Config,
                message: m,
            })
        };
        if !self.scene.is_file() {
            return bad(format!("scene file {} does not exist", self.scene.display()));
        }
        if let Some(f) = &self.trajectory_file {
            if !f.is_file() {
                return bad(format!("trajectory file {} does not exist", f.display()));
            }
            if self.trajectory.is_some() {
                return bad("give either trajectory parameters or a trajectory file, not both".into());
            }
        }
        if let Some(p) = &self.trajectory {
            p.validate().map_err(fail(Stage::Config))?;
        }
        self.render.validate().map_err(fail(Stage::Config))?;
        self.lens.validate().map_err(fail(Stage::Config))?;
        if self.sensors.imu {
            self.imu.validate().map_err(fail(Stage::Config))?;
        }
        if self.sensors.events {
            let rate = self.trajectory.as_ref().map_or(25.0, |p| p.frame_rate);
            self.events.validate_for_frame_rate(rate).map_err(fail(Stage::Config))?;
            if self.event_spp == 0 {
                return bad("event_spp must be >= 1".into());
            }
        }
        if !(self.free_space_cell > 0.0) {
            return bad(format!("free_space_cell must be > 0, got {}", self.free_space_cell));
        }
        if self.output.exists() && !self.output.is_dir() {
            return bad(format!("output {} is not a directory", self.output.display()));
        }
        Ok(())
    }
}

/// One line of progress output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub stage: Stage,
    /// `started`, `done`, `rendered`, `skipped` or `progress`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
}

impl ProgressRecord {
    fn new(stage: Stage, status: &str) -> Self {
        Self {
            stage,
            status: status.into(),
            index: None,
            total: None,
        }
    }

    fn at(stage: Stage, status: &str, index: usize, total: usize) -> Self {
        Self {
            stage,
            status: status.into(),
            index: Some(index),
            total: Some(total),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Lens for a render at `factor` times the reference width.
pub fn scale_lens(lens: &Lens, factor: f64) -> Lens {
    match *lens {
        Lens::Pinhole { focal_px } => Lens::Pinhole {
            focal_px: focal_px * factor,
        },
        Lens::ThinLens {
            focal_px,
            aperture_radius,
            focus_distance,
        } => Lens::ThinLens {
            focal_px: focal_px * factor,
            aperture_radius,
            focus_distance,
        },
        other => other,
    }
}

/// Scene after the configured change.
pub fn prepare_scene(job: &JobConfig) -> Result<Scene, PipelineError> {
    let scene = load_scene(&job.scene).map_err(fail(Stage::Scene))?;
    let seed = derive_seed(job.seed, &[SCENE_CHANGE_STREAM]);
    Ok(match job.configuration {
        Configuration::Original => scene,
        Configuration::Rearranged => {
            let cfg = RearrangeConfig {
                seed,
                ..job.rearrange.clone()
            };
            rearrange(&scene, &cfg).map_err(fail(Stage::SceneChange))?.0
        }
        Configuration::Relit => {
            let cfg = LightingConfig {
                seed,
                ..job.lighting.clone()
            };
            randomize_lighting(&scene, &cfg).map_err(fail(Stage::SceneChange))?.0
        }
    })
}

pub fn prepare_trajectory(job: &JobConfig, scene: &Scene) -> Result<Trajectory, PipelineError> {
    let free = compute_free_space(scene, job.free_space_cell).map_err(fail(Stage::Trajectory))?;
    let traj = match &job.trajectory_file {
        Some(path) => read_trajectory(path).map_err(fail(Stage::Trajectory))?,
        None => {
            let params = job
                .trajectory
                .clone()
                .unwrap_or_else(|| sample_params(derive_seed(job.seed, &[TRAJECTORY_STREAM])));
            generate_trajectory(&free, &params).map_err(fail(Stage::Trajectory))?
        }
    };
    if job.jitter {
        let seed = derive_seed(job.seed, &[JITTER_STREAM]);
        return apply_jitter(&traj, &JitterModel::default(), &free, seed).map_err(fail(Stage::Trajectory));
    }
    Ok(traj)
}

fn render_settings(job: &JobConfig) -> RenderSettings {
    RenderSettings {
        seed: derive_seed(job.seed, &[RENDER_STREAM, job.render.seed]),
        ..job.render.clone()
    }
}

/// High-rate luminance renders along the spline, fed through the emulator.
/// All event frames share one sampling seed, so Monte Carlo noise does not
/// change between frames and cannot trigger events by itself.
pub fn render_events(
    job: &JobConfig,
    scene: &Scene,
    bvh: &Bvh,
    spline: &PoseSpline,
    progress: &mut dyn FnMut(ProgressRecord),
) -> Result<Vec<Event>, PipelineError> {
    let cfg = &job.events;
    let settings = RenderSettings {
        width: cfg.width,
        height: cfg.height,
        spp: job.event_spp,
        shutter_subframes: 1,
        seed: derive_seed(job.seed, &[EVENT_RENDER_STREAM]),
        ..job.render.clone()
    };
    let lens = scale_lens(&job.lens, cfg.width as f64 / job.render.width as f64);
    let first = (spline.start() * cfg.sim_rate - 1e-6).ceil() as i64;
    let last = (spline.end() * cfg.sim_rate + 1e-6).floor() as i64;
    let total = (last - first + 1).max(0) as usize;
    let frame_at = |k: i64| -> Result<IntensityFrame, PipelineError> {
        let t = k as f64 / cfg.sim_rate;
        let pose: Pose = spline.pose(t).map_err(fail(Stage::Events))?;
        let (rgb, _) = render_rgb(scene, bvh, &lens, &settings, &[pose], 0);
        Ok(IntensityFrame::from_rgb(t, &rgb))
    };
    let mut emulator = EventEmulator::new(&frame_at(first)?, cfg).map_err(fail(Stage::Events))?;
    let mut events = Vec::new();
    let every = (total / EVENT_PROGRESS_STEPS).max(1);
    for (i, k) in (first + 1..=last).enumerate() {
        events.extend(emulator.push(&frame_at(k)?).map_err(fail(Stage::Events))?);
        if (i + 1) % every == 0 {
            progress(ProgressRecord::at(Stage::Events, "progress", i + 2, total));
        }
    }
    Ok(events)
}

/// Runs the whole job. Frames whose files already verify in the output
/// directory are not rendered again.
pub fn run_pipeline(
    job: &JobConfig,
    progress: &mut dyn FnMut(ProgressRecord),
) -> Result<SequenceManifest, PipelineError> {
    job.validate()?;
    progress(ProgressRecord::new(Stage::Scene, "started"));
    let scene = prepare_scene(job)?;
    let bvh = build_bvh(&scene).map_err(fail(Stage::Scene))?;
    progress(ProgressRecord::new(Stage::Scene, "done"));

    progress(ProgressRecord::new(Stage::Trajectory, "started"));
    let traj = prepare_trajectory(job, &scene)?;
    let n = traj.frames.len();
    progress(ProgressRecord::at(Stage::Trajectory, "done", n, n));

    let spline = if job.sensors.imu || job.sensors.events {
        Some(fit_spline(&traj.open_poses()).map_err(fail(Stage::Spline))?)
    } else {
        None
    };

    let mut writer = SequenceWriter::open(&job.output).map_err(fail(Stage::Write))?;
    let settings = render_settings(job);
    let noisy = job.sensors.depth_noise;
    let mids: Vec<Pose> = traj
        .frames
        .iter()
        .map(|k| midpoint_pose(&k.shutter_open_pose, &k.shutter_close_pose))
        .collect();
    for (i, k) in traj.frames.iter().enumerate() {
        if writer.frame_is_complete(i, noisy) {
            progress(ProgressRecord::at(Stage::Render, "skipped", i, n));
            continue;
        }
        let mut frame = render_frame(
            &scene,
            &bvh,
            &k.shutter_open_pose,
            &k.shutter_close_pose,
            &job.lens,
            &settings,
            i as u64,
            k.timestamp,
        )
        .map_err(fail(Stage::Render))?;
        if i + 1 < n {
            frame.flow = Some(compute_flow(&bvh, &mids[i], &mids[i + 1], &job.lens, settings.width, settings.height));
        }
        let noisy_depth = noisy.then(|| {
            apply_kinect_noise(&frame.gt.depth, &job.kinect, derive_seed(job.seed, &[KINECT_STREAM, i as u64]))
        });
        writer.write_frame(i, &frame, noisy_depth.as_ref()).map_err(fail(Stage::Write))?;
        progress(ProgressRecord::at(Stage::Render, "rendered", i, n));
    }

    let imu: Vec<ImuSample> = match (&spline, job.sensors.imu) {
        (Some(s), true) => {
            progress(ProgressRecord::new(Stage::Imu, "started"));
            let mut cfg = job.imu.clone();
            if let Some(noise) = cfg.noise.as_mut() {
                noise.seed = derive_seed(job.seed, &[IMU_NOISE_STREAM, noise.seed]);
            }
            let samples = synthesize_imu(s, &cfg).map_err(fail(Stage::Imu))?;
            progress(ProgressRecord::at(Stage::Imu, "done", samples.len(), samples.len()));
            samples
        }
        _ => Vec::new(),
    };
    let events: Vec<Event> = match (&spline, job.sensors.events) {
        (Some(s), true) => {
            progress(ProgressRecord::new(Stage::Events, "started"));
            let ev = render_events(job, &scene, &bvh, s, progress)?;
            progress(ProgressRecord::at(Stage::Events, "done", ev.len(), ev.len()));
            ev
        }
        _ => Vec::new(),
    };

    let info = SequenceInfo {
        scene: scene.name.clone(),
        configuration: job.configuration,
        trajectory: Some(traj.params.clone()),
        seed: job.seed,
        camera: CameraInfo {
            width: settings.width,
            height: settings.height,
            lens: job.lens,
            stereo_baseline: None,
        },
        frame_rate: traj.params.frame_rate,
    };
    let manifest = writer
        .finish(info, n, noisy, &traj.open_poses(), &imu, &events)
        .map_err(fail(Stage::Write))?;
    progress(ProgressRecord::new(Stage::Write, "done"));
    Ok(manifest)
}
