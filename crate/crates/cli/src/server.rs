//! Local HTTP preview service used by the trajectory editor.
//!
//! All bodies are JSON. Poses are `{"position": [x, y, z], "orientation":
//! [qx, qy, qz, qw]}` in world coordinates (camera x right, y down, z
//! forward). Failures answer with `{"stage", "message"}`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use nalgebra::{Point2, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use roomgen::dataset::{encode_rgb8, export_trajectory, rgb_to_srgb8, TrajectoryFormat};
use roomgen::geometry::{Pose, TimedPose};
use roomgen::image::Image;
use roomgen::pipeline::scale_lens;
use roomgen::render::{build_bvh, render_rgb, Bvh, Lens, RenderSettings};
use roomgen::rng::derive_seed;
use roomgen::scene::{compute_free_space, load_scene, FreeSpaceMap, Hull, LightKind, Scene};
use roomgen::spline::{fit_spline, synthesize_imu, ImuConfig, ImuSample, PoseSpline};
use roomgen::trajectory::{apply_jitter, generate_trajectory, sample_params, JitterModel, TrajectoryParams};

use crate::StageError;

pub const DEFAULT_PORT: u16 = 8765;
pub const MAX_PREVIEW_SPP: u32 = 32;
pub const MAX_PREVIEW_WIDTH: usize = 320;
pub const MAX_PREVIEW_HEIGHT: usize = 240;
/// Wall-clock budget of one preview render.
pub const PREVIEW_BUDGET: Duration = Duration::from_secs(2);
/// Span of /api/imu/preview from the first control pose (s).
pub const IMU_PREVIEW_SPAN: f64 = 2.0;
/// Reference width the default lens focal length belongs to.
const REFERENCE_WIDTH: f64 = 640.0;
const MAX_SPLINE_SAMPLES: usize = 200_000;
const MAX_TRAJECTORY_FRAMES: usize = 20_000;
const QUATERNION_TOL: f64 = 1e-2;

pub struct AppState {
    pub scene: Scene,
    pub bvh: Bvh,
    pub free: FreeSpaceMap,
    pub export_dir: PathBuf,
    /// Bounds concurrent preview renders.
    render_slots: Semaphore,
}

impl AppState {
    pub fn load(scene_path: &Path, export_dir: &Path) -> Result<Self, StageError> {
        let scene = load_scene(scene_path).map_err(StageError::at("scene"))?;
        let bvh = build_bvh(&scene).map_err(StageError::at("scene"))?;
        let free = compute_free_space(&scene, 0.1).map_err(StageError::at("scene"))?;
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get().div_ceil(4));
        Ok(Self {
            scene,
            bvh,
            free,
            export_dir: export_dir.to_path_buf(),
            render_slots: Semaphore::new(workers),
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: StageError,
}

impl ApiError {
    fn bad(stage: &str, message: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: StageError::new(stage, message),
        }
    }

    fn internal(stage: &str, message: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: StageError::new(stage, message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self {
            status: r.status(),
            body: StageError::new("request", r.body_text()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn bad_at<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> ApiError {
    move |e| ApiError::bad(stage, e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub position: [f64; 3],
    /// `[qx, qy, qz, qw]`
    pub orientation: [f64; 4],
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> Self {
        let t = p.translation.vector;
        let q = p.rotation.quaternion();
        Self {
            position: [t.x, t.y, t.z],
            orientation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn to_pose(&self) -> Result<Pose, ApiError> {
        let [x, y, z, w] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !((n - 1.0).abs() <= QUATERNION_TOL) {
            return Err(ApiError::bad("request", format!("orientation norm {n} is not 1")));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(ApiError::bad("request", "position must be finite"));
        }
        let [px, py, pz] = self.position;
        Ok(Pose::from_parts(Translation3::new(px, py, pz), UnitQuaternion::from_quaternion(q)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPose {
    /// Seconds; control poses must be evenly spaced in time.
    pub timestamp: f64,
    #[serde(flatten)]
    pub pose: PoseJson,
}

fn fit_controls(controls: &[ControlPose]) -> Result<PoseSpline, ApiError> {
    let poses = controls
        .iter()
        .map(|c| Ok(TimedPose::new(c.timestamp, c.pose.to_pose()?)))
        .collect::<Result<Vec<_>, ApiError>>()?;
    fit_spline(&poses).map_err(bad_at("spline"))
}

/// Times `start, start + 1/rate, ...` up to `end`.
fn sample_times(start: f64, end: f64, rate: f64, limit: usize) -> Result<Vec<f64>, ApiError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ApiError::bad("request", format!("rate must be > 0, got {rate}")));
    }
    let n = ((end - start) * rate + 1e-9).floor() as usize + 1;
    if n > limit {
        return Err(ApiError::bad("request", format!("{n} samples exceed the limit of {limit}")));
    }
    Ok((0..n).map(|k| (start + k as f64 / rate).min(end)).collect())
}

#[derive(Serialize)]
pub struct SceneObjectSummary {
    pub name: String,
    pub nyu40_class: u16,
    pub instance_id: u32,
    pub movable: bool,
    /// Counter-clockwise floor-plan outline of the collision hull.
    pub footprint: Vec<[f64; 2]>,
    pub height_range: [f64; 2],
}

#[derive(Serialize)]
pub struct LightSummary {
    pub name: String,
    pub kind: LightKind,
    pub position: [f64; 3],
    pub color: [f64; 3],
    pub brightness: f64,
    pub enabled: bool,
}

#[derive(Serialize)]
pub struct SceneSummary {
    pub name: String,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub floor_height: f64,
    pub objects: Vec<SceneObjectSummary>,
    pub lights: Vec<LightSummary>,
}

/// Andrew's monotone chain, counter-clockwise without repeating the start.
fn convex_hull_2d(mut pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let floor = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= floor + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

pub fn scene_summary(scene: &Scene) -> SceneSummary {
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let pose = o.pose();
            let local: Vec<_> = match &o.physical.hull {
                Hull::Box(b) => b.corners().to_vec(),
                Hull::Convex(pts) => pts.clone(),
            };
            let world: Vec<_> = local.iter().map(|p| pose * p).collect();
            let outline = convex_hull_2d(world.iter().map(|p| Point2::new(p.x, p.y)).collect());
            let zs = world.iter().map(|p| p.z);
            let lo = zs.clone().fold(f64::INFINITY, f64::min);
            let hi = zs.fold(f64::NEG_INFINITY, f64::max);
            SceneObjectSummary {
                name: o.name.clone(),
                nyu40_class: o.nyu40_class,
                instance_id: o.instance_id,
                movable: o.physical.movable,
                footprint: outline.iter().map(|p| [p.x, p.y]).collect(),
                height_range: [lo, hi],
            }
        })
        .collect();
    let lights = scene
        .lights
        .iter()
        .map(|l| LightSummary {
            name: l.name.clone(),
            kind: l.kind,
            position: l.position.coords.into(),
            color: l.color.into(),
            brightness: l.brightness,
            enabled: l.enabled,
        })
        .collect();
    SceneSummary {
        name: scene.name.clone(),
        bounds_min: scene.bounds.min.coords.into(),
        bounds_max: scene.bounds.max.coords.into(),
        floor_height: scene.floor_height,
        objects,
        lights,
    }
}

async fn get_scene(State(state): State<Arc<AppState>>) -> Json<SceneSummary> {
    Json(scene_summary(&state.scene))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineSampleRequest {
    pub control_poses: Vec<ControlPose>,
    /// Hz
    #[serde(default = "default_sample_rate")]
    pub rate: f64,
}

fn default_sample_rate() -> f64 {
    100.0
}

#[derive(Serialize, Deserialize)]
pub struct SplineSample {
    pub timestamp: f64,
    #[serde(flatten)]
    pub pose: PoseJson,
    /// World frame (m/s).
    pub linear_velocity: [f64; 3],
    /// Body frame (rad/s).
    pub angular_velocity: [f64; 3],
}

#[derive(Serialize, Deserialize)]
pub struct SplineSampleResponse {
    pub samples: Vec<SplineSample>,
}

async fn spline_sample(
    body: Result<Json<SplineSampleRequest>, JsonRejection>,
) -> ApiResult<SplineSampleResponse> {
    let Json(req) = body?;
    let spline = fit_controls(&req.control_poses)?;
    let times = sample_times(spline.start(), spline.end(), req.rate, MAX_SPLINE_SAMPLES)?;
    let samples = times
        .into_iter()
        .map(|t| {
            let pose = spline.pose(t).map_err(bad_at("spline"))?;
            let d = spline.eval(t, 1).map_err(bad_at("spline"))?;
            let (omega, _) = spline.body_rates(t).map_err(bad_at("spline"))?;
            Ok(SplineSample {
                timestamp: t,
                pose: PoseJson::from_pose(&pose),
                linear_velocity: [d[0], d[1], d[2]],
                angular_velocity: omega.into(),
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(SplineSampleResponse { samples }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRequest {
    /// Drawn from `seed` when absent.
    #[serde(default)]
    pub params: Option<TrajectoryParams>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: bool,
}

#[derive(Serialize, Deserialize)]
pub struct KeyframeJson {
    pub timestamp: f64,
    pub shutter_open: PoseJson,
    pub shutter_close: PoseJson,
}

#[derive(Serialize, Deserialize)]
pub struct TrajectoryResponse {
    pub params: TrajectoryParams,
    pub keyframes: Vec<KeyframeJson>,
}

async fn trajectory_generate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<TrajectoryRequest>, JsonRejection>,
) -> ApiResult<TrajectoryResponse> {
    let Json(req) = body?;
    let params = req.params.unwrap_or_else(|| sample_params(req.seed));
    params.validate().map_err(bad_at("trajectory"))?;
    let frames = params.frame_count().map_err(bad_at("trajectory"))?;
    if frames > MAX_TRAJECTORY_FRAMES {
        return Err(ApiError::bad("trajectory", format!("{frames} frames exceed the limit of {MAX_TRAJECTORY_FRAMES}")));
    }
    let traj = tokio::task::spawn_blocking(move || {
        let traj = generate_trajectory(&state.free, &params)?;
        if req.jitter {
            return apply_jitter(&traj, &JitterModel::default(), &state.free, req.seed);
        }
        Ok(traj)
    })
    .await
    .map_err(|e| ApiError::internal("trajectory", e))?
    .map_err(bad_at("trajectory"))?;
    let keyframes = traj
        .frames
        .iter()
        .map(|k| KeyframeJson {
            timestamp: k.timestamp,
            shutter_open: PoseJson::from_pose(&k.shutter_open_pose),
            shutter_close: PoseJson::from_pose(&k.shutter_close_pose),
        })
        .collect();
    Ok(Json(TrajectoryResponse {
        params: traj.params,
        keyframes,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderPreviewRequest {
    pub pose: PoseJson,
    /// Pinhole with the default focal length scaled to `width` when absent.
    #[serde(default)]
    pub lens: Option<Lens>,
    #[serde(default = "default_preview_width")]
    pub width: usize,
    #[serde(default = "default_preview_height")]
    pub height: usize,
    #[serde(default = "default_preview_spp")]
    pub spp: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_preview_width() -> usize {
    160
}

fn default_preview_height() -> usize {
    120
}

fn default_preview_spp() -> u32 {
    8
}

#[derive(Serialize, Deserialize)]
pub struct RenderPreviewResponse {
    /// Base64 PNG, 8-bit sRGB.
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub spp_requested: u32,
    /// Samples per pixel finished within the time budget.
    pub spp_completed: u32,
    pub elapsed_ms: u64,
}

/// Renders one-sample passes until `spp` is reached or the next pass would
/// overrun `budget`; at least one pass always runs.
pub fn progressive_render(
    scene: &Scene,
    bvh: &Bvh,
    lens: &Lens,
    pose: &Pose,
    (width, height): (usize, usize),
    spp: u32,
    seed: u64,
    budget: Duration,
) -> (Image<[f32; 3]>, u32) {
    let start = Instant::now();
    let mut sum = Image::filled(width, height, [0.0f32; 3]);
    let mut done = 0;
    while done < spp {
        let settings = RenderSettings {
            width,
            height,
            spp: 1,
            shutter_subframes: 1,
            seed: derive_seed(seed, &[u64::from(done)]),
            ..RenderSettings::default()
        };
        let (pass, _) = render_rgb(scene, bvh, lens, &settings, &[*pose], 0);
        for (acc, p) in sum.data.iter_mut().zip(&pass.data) {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        done += 1;
        let per_pass = start.elapsed() / done;
        if start.elapsed() + per_pass > budget {
            break;
        }
    }
    let n = done as f32;
    (sum.map(|p| p.map(|v| v / n)), done)
}

async fn render_preview(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RenderPreviewRequest>, JsonRejection>,
) -> ApiResult<RenderPreviewResponse> {
    let Json(req) = body?;
    if req.spp == 0 || req.spp > MAX_PREVIEW_SPP {
        return Err(ApiError::bad("render", format!("spp must be in 1..={MAX_PREVIEW_SPP}, got {}", req.spp)));
    }
    if req.width == 0 || req.height == 0 || req.width > MAX_PREVIEW_WIDTH || req.height > MAX_PREVIEW_HEIGHT {
        return Err(ApiError::bad(
            "render",
            format!("size {}x{} outside 1..={MAX_PREVIEW_WIDTH} x 1..={MAX_PREVIEW_HEIGHT}", req.width, req.height),
        ));
    }
    let pose = req.pose.to_pose()?;
    let lens = req
        .lens
        .unwrap_or_else(|| scale_lens(&Lens::default(), req.width as f64 / REFERENCE_WIDTH));
    lens.validate().map_err(bad_at("render"))?;
    let _slot = state.render_slots.acquire().await.map_err(|e| ApiError::internal("render", e))?;
    let start = Instant::now();
    let worker = state.clone();
    let (img, done) = tokio::task::spawn_blocking(move || {
        progressive_render(
            &worker.scene,
            &worker.bvh,
            &lens,
            &pose,
            (req.width, req.height),
            req.spp,
            req.seed,
            PREVIEW_BUDGET,
        )
    })
    .await
    .map_err(|e| ApiError::internal("render", e))?;
    let png = encode_rgb8(&rgb_to_srgb8(&img), "preview.png").map_err(|e| ApiError::internal("render", e))?;
    Ok(Json(RenderPreviewResponse {
        image: base64::engine::general_purpose::STANDARD.encode(png),
        width: req.width,
        height: req.height,
        spp_requested: req.spp,
        spp_completed: done,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuPreviewRequest {
    pub control_poses: Vec<ControlPose>,
    #[serde(default)]
    pub imu: ImuConfig,
}

#[derive(Serialize, Deserialize)]
pub struct ImuPreviewResponse {
    pub samples: Vec<ImuSample>,
}

async fn imu_preview(body: Result<Json<ImuPreviewRequest>, JsonRejection>) -> ApiResult<ImuPreviewResponse> {
    let Json(req) = body?;
    let spline = fit_controls(&req.control_poses)?;
    let samples = synthesize_imu(&spline, &req.imu).map_err(bad_at("imu"))?;
    let end = spline.start() + IMU_PREVIEW_SPAN;
    let samples = samples.into_iter().take_while(|s| s.timestamp <= end + 1e-9).collect();
    Ok(Json(ImuPreviewResponse { samples }))
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Hz at which the spline is sampled for export.
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub lens: Lens,
    #[serde(default = "default_camera_width")]
    pub width: usize,
    #[serde(default = "default_camera_height")]
    pub height: usize,
    /// Right camera offset along the left camera's x axis (m).
    #[serde(default)]
    pub stereo_baseline: Option<f64>,
}

fn default_frame_rate() -> f64 {
    25.0
}

fn default_camera_width() -> usize {
    640
}

fn default_camera_height() -> usize {
    480
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            frame_rate: default_frame_rate(),
            lens: Lens::default(),
            width: default_camera_width(),
            height: default_camera_height(),
            stereo_baseline: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRequest {
    pub control_poses: Vec<ControlPose>,
    #[serde(default)]
    pub camera: CameraConfig,
    pub format: TrajectoryFormat,
    /// File stem made of letters, digits, `-` and `_`.
    #[serde(default = "default_export_name")]
    pub name: String,
}

fn default_export_name() -> String {
    "trajectory".into()
}

#[derive(Serialize, Deserialize)]
pub struct ExportResponse {
    pub path: PathBuf,
    /// Right camera trajectory when a stereo baseline was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_path: Option<PathBuf>,
    /// Camera configuration written next to the trajectory.
    pub camera_path: PathBuf,
    pub poses: usize,
}

async fn export(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ExportRequest>, JsonRejection>,
) -> ApiResult<ExportResponse> {
    let Json(req) = body?;
    let name_ok = !req.name.is_empty()
        && req.name.len() <= 64
        && req.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !name_ok {
        return Err(ApiError::bad("export", format!("invalid file name '{}'", req.name)));
    }
    let cam = &req.camera;
    req.camera.lens.validate().map_err(bad_at("export"))?;
    if cam.stereo_baseline.is_some_and(|b| !b.is_finite()) {
        return Err(ApiError::bad("export", "stereo_baseline must be finite"));
    }
    let spline = fit_controls(&req.control_poses)?;
    let times = sample_times(spline.start(), spline.end(), cam.frame_rate, MAX_SPLINE_SAMPLES)?;
    let left = times
        .iter()
        .map(|&t| Ok(TimedPose::new(t, spline.pose(t).map_err(bad_at("spline"))?)))
        .collect::<Result<Vec<_>, ApiError>>()?;

    let ext = match req.format {
        TrajectoryFormat::Tum => "txt",
        TrajectoryFormat::Euroc => "csv",
    };
    std::fs::create_dir_all(&state.export_dir).map_err(|e| ApiError::internal("export", e))?;
    let dir = std::fs::canonicalize(&state.export_dir).map_err(|e| ApiError::internal("export", e))?;
    let path = dir.join(format!("{}.{ext}", req.name));
    export_trajectory(&left, req.format, &path).map_err(|e| ApiError::internal("export", e))?;
    let right_path = match cam.stereo_baseline {
        Some(b) => {
            let offset = Pose::from_parts(Translation3::from(Vector3::new(b, 0.0, 0.0)), UnitQuaternion::identity());
            let right: Vec<TimedPose> = left.iter().map(|p| TimedPose::new(p.timestamp, p.pose * offset)).collect();
            let rp = dir.join(format!("{}_right.{ext}", req.name));
            export_trajectory(&right, req.format, &rp).map_err(|e| ApiError::internal("export", e))?;
            Some(rp)
        }
        None => None,
    };
    let camera_path = dir.join(format!("{}.camera.json", req.name));
    let camera_json = serde_json::to_string_pretty(cam).map_err(|e| ApiError::internal("export", e))?;
    std::fs::write(&camera_path, camera_json).map_err(|e| ApiError::internal("export", e))?;
    Ok(Json(ExportResponse {
        path,
        right_path,
        camera_path,
        poses: left.len(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scene", get(get_scene))
        .route("/api/spline/sample", post(spline_sample))
        .route("/api/trajectory/generate", post(trajectory_generate))
        .route("/api/render/preview", post(render_preview))
        .route("/api/imu/preview", post(imu_preview))
        .route("/api/export", post(export))
        .with_state(state)
}

/// Loads the scene and serves the API on `addr` until the process ends.
pub async fn serve_preview(scene_path: &Path, addr: SocketAddr, export_dir: &Path) -> Result<(), StageError> {
    let state = AppState::load(scene_path, export_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(StageError::at("serve"))?;
    let local = listener.local_addr().map_err(StageError::at("serve"))?;
    println!("serving {} on http://{local}", state.scene.name);
    axum::serve(listener, router(Arc::new(state))).await.map_err(StageError::at("serve"))
}
