//! `roomgen` subcommands.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use roomgen::dataset::{export_trajectory, import_trajectory, Configuration, TrajectoryFormat};
use roomgen::evaluation::{compute_ate_detailed, format_ate, AteOptions, DEFAULT_MAX_DT};
use roomgen::events::write_events;
use roomgen::geometry::TimedPose;
use roomgen::pipeline::{render_events, run_pipeline, JobConfig};
use roomgen::render::build_bvh;
use roomgen::scene::{lights_to_string, load_scene, save_scene};
use roomgen::scene_change::{randomize_lighting, rearrange, LightingConfig, RearrangeConfig};
use roomgen::spline::{fit_spline, synthesize_imu, write_imu_csv, ImuConfig, ImuNoise};
use roomgen::trajectory::{
    apply_jitter, generate_trajectory, read_trajectory, sample_params, write_trajectory, JitterModel,
    TrajectoryParams, TrajectoryType,
};

use crate::server::{serve_preview, DEFAULT_PORT};
use crate::StageError;

#[derive(Debug, Parser)]
#[command(name = "roomgen", version, about = "Synthetic RGB-D, inertial and event sequences of indoor scenes")]
pub struct Cli {
    /// Seed for every random draw of the command [default: 0, or the job file's].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write a sequence directory.
    Render(RenderArgs),
    /// Generate a camera trajectory through a scene's free space.
    Trajectory(TrajectoryArgs),
    /// Synthesize IMU readings along a trajectory.
    Imu(ImuArgs),
    /// Emulate an event camera along a trajectory.
    Events(EventsArgs),
    /// Push a random subset of the movable objects.
    Rearrange(RearrangeArgs),
    /// Randomize colour temperature, brightness and on/off state of the lights.
    Relight(RelightArgs),
    /// Convert a trajectory between file formats.
    Export(ExportArgs),
    /// Absolute trajectory error of an estimate against ground truth.
    Ate(AteArgs),
    /// Serve the preview API for the trajectory editor.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    /// Native trajectory file with shutter-open and shutter-close poses.
    Native,
    Tum,
    Euroc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConfigurationArg {
    Original,
    Relit,
    Rearranged,
}

impl From<ConfigurationArg> for Configuration {
    fn from(c: ConfigurationArg) -> Self {
        match c {
            ConfigurationArg::Original => Configuration::Original,
            ConfigurationArg::Relit => Configuration::Relit,
            ConfigurationArg::Rearranged => Configuration::Rearranged,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Job description (TOML); flags below override its fields.
    #[arg(long)]
    pub job: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Sequence output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub configuration: Option<ConfigurationArg>,
    /// Native trajectory file to render instead of generating one.
    #[arg(long)]
    pub trajectory_file: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub spp: Option<u32>,
    /// Add hand-held jitter to the generated trajectory.
    #[arg(long)]
    pub jitter: bool,
    #[arg(long)]
    pub no_imu: bool,
    #[arg(long)]
    pub events: bool,
    #[arg(long)]
    pub depth_noise: bool,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Native trajectory output file.
    #[arg(long)]
    pub output: PathBuf,
    /// 1 two-body, 2 hand-held (looks down), 3 look-forward; drawn from the
    /// seed together with the multipliers when absent.
    #[arg(long = "type", value_parser = parse_type)]
    pub traj_type: Option<TrajectoryType>,
    #[arg(long)]
    pub v_mult: Option<f64>,
    #[arg(long)]
    pub w_mult: Option<f64>,
    #[arg(long, default_value_t = 40.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 25.0)]
    pub frame_rate: f64,
    #[arg(long)]
    pub jitter: bool,
    /// Also write the shutter-open poses in TUM format.
    #[arg(long)]
    pub tum: Option<PathBuf>,
    /// Free-space grid cell size (m).
    #[arg(long, default_value_t = 0.1)]
    pub cell: f64,
}

fn parse_type(s: &str) -> Result<TrajectoryType, String> {
    let v: u8 = s.parse().map_err(|_| format!("'{s}' is not 1, 2 or 3"))?;
    TrajectoryType::try_from(v)
}

#[derive(Debug, Args)]
pub struct ImuArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Native)]
    pub format: FileFormat,
    /// CSV output file.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 800.0)]
    pub rate: f64,
    /// rad/s/√Hz; any noise flag enables the noise model.
    #[arg(long)]
    pub gyro_noise_density: Option<f64>,
    /// m/s²/√Hz
    #[arg(long)]
    pub accel_noise_density: Option<f64>,
    /// rad/s²/√Hz
    #[arg(long)]
    pub gyro_bias_walk: Option<f64>,
    /// m/s³/√Hz
    #[arg(long)]
    pub accel_bias_walk: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Native trajectory file.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Event text file.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    /// Log-intensity contrast threshold.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    /// Luminance frames per second.
    #[arg(long, default_value_t = 1000.0)]
    pub sim_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub spp: u32,
}

#[derive(Debug, Args)]
pub struct RearrangeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output scene document.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output scene document.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the lighting setup as a standalone document.
    #[arg(long)]
    pub lights: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    pub disable_probability: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Native)]
    pub from: FileFormat,
    #[arg(long, value_enum)]
    pub to: FileFormat,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AteArgs {
    /// Estimated trajectory.
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth trajectory.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Tum)]
    pub est_format: FileFormat,
    #[arg(long, value_enum, default_value_t = FileFormat::Tum)]
    pub gt_format: FileFormat,
    /// Association window (s).
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,
    /// Fit a similarity scale as well.
    #[arg(long)]
    pub scale: bool,
    /// Print JSON instead of the text block.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    /// Directory for /api/export files.
    #[arg(long, default_value = "exports")]
    pub export_dir: PathBuf,
}

/// Runs a command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Render(a) => render(a, cli.seed, out),
        Command::Trajectory(a) => trajectory(a, seed, out),
        Command::Imu(a) => imu(a, seed, out),
        Command::Events(a) => events(a, seed, out),
        Command::Rearrange(a) => rearrange_cmd(a, seed, out),
        Command::Relight(a) => relight(a, seed, out),
        Command::Export(a) => export(a, out),
        Command::Ate(a) => ate(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn say(out: &mut dyn std::io::Write, line: &str) -> Result<(), StageError> {
    writeln!(out, "{line}").map_err(StageError::at("output"))
}

fn render(a: RenderArgs, seed: Option<u64>, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let mut job = match &a.job {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| StageError::new("config", format!("{}: {e}", path.display())))?;
            JobConfig::from_toml(&text)?
        }
        None => {
            let (Some(scene), Some(output)) = (&a.scene, &a.output) else {
                return Err(StageError::new("config", "either --job or both --scene and --output are required"));
            };
            JobConfig::new(scene, output, 0)
        }
    };
    if let Some(s) = a.scene {
        job.scene = s;
    }
    if let Some(o) = a.output {
        job.output = o;
    }
    if let Some(s) = seed {
        job.seed = s;
    }
    if let Some(c) = a.configuration {
        job.configuration = c.into();
    }
    if let Some(t) = a.trajectory_file {
        job.trajectory_file = Some(t);
        job.trajectory = None;
    }
    if let Some(w) = a.width {
        job.render.width = w;
    }
    if let Some(h) = a.height {
        job.render.height = h;
    }
    if let Some(s) = a.spp {
        job.render.spp = s;
    }
    job.jitter |= a.jitter;
    job.sensors.imu &= !a.no_imu;
    job.sensors.events |= a.events;
    job.sensors.depth_noise |= a.depth_noise;

    let mut write_err = None;
    let manifest = run_pipeline(&job, &mut |r| {
        if let Err(e) = writeln!(out, "{}", r.to_json_line()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(StageError::new("output", e));
    }
    say(
        out,
        &format!("{} frames written to {} ({} files)", manifest.frame_count, job.output.display(), manifest.files.len()),
    )
}

fn trajectory(a: TrajectoryArgs, seed: u64, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let scene = load_scene(&a.scene).map_err(StageError::at("scene"))?;
    let free = roomgen::scene::compute_free_space(&scene, a.cell).map_err(StageError::at("scene"))?;
    let drawn = sample_params(seed);
    let params = TrajectoryParams {
        traj_type: a.traj_type.unwrap_or(drawn.traj_type),
        v_mult: a.v_mult.unwrap_or(drawn.v_mult),
        w_mult: a.w_mult.unwrap_or(drawn.w_mult),
        duration: a.duration,
        frame_rate: a.frame_rate,
        exposure: None,
        seed,
    };
    let mut traj = generate_trajectory(&free, &params).map_err(StageError::at("trajectory"))?;
    if a.jitter {
        traj = apply_jitter(&traj, &JitterModel::default(), &free, seed).map_err(StageError::at("trajectory"))?;
    }
    write_trajectory(&traj, &a.output).map_err(StageError::at("write"))?;
    if let Some(tum) = &a.tum {
        export_trajectory(&traj.open_poses(), TrajectoryFormat::Tum, tum).map_err(StageError::at("write"))?;
    }
    say(
        out,
        &format!(
            "type {} v_mult {:.3} w_mult {:.3}: {} frames written to {}",
            params.traj_type,
            params.v_mult,
            params.w_mult,
            traj.frames.len(),
            a.output.display()
        ),
    )
}

/// Shutter-open poses from a trajectory file of any supported format.
fn load_poses(path: &Path, format: FileFormat) -> Result<Vec<TimedPose>, StageError> {
    match format {
        FileFormat::Native => Ok(read_trajectory(path).map_err(StageError::at("read"))?.open_poses()),
        FileFormat::Tum => import_trajectory(path, TrajectoryFormat::Tum).map_err(StageError::at("read")),
        FileFormat::Euroc => import_trajectory(path, TrajectoryFormat::Euroc).map_err(StageError::at("read")),
    }
}

fn imu(a: ImuArgs, seed: u64, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let poses = load_poses(&a.trajectory, a.format)?;
    let spline = fit_spline(&poses).map_err(StageError::at("spline"))?;
    let densities = [a.gyro_noise_density, a.accel_noise_density, a.gyro_bias_walk, a.accel_bias_walk];
    let noise = densities.iter().any(Option::is_some).then(|| ImuNoise {
        gyro_noise_density: a.gyro_noise_density.unwrap_or(0.0),
        accel_noise_density: a.accel_noise_density.unwrap_or(0.0),
        gyro_bias_walk: a.gyro_bias_walk.unwrap_or(0.0),
        accel_bias_walk: a.accel_bias_walk.unwrap_or(0.0),
        seed,
    });
    let cfg = ImuConfig {
        rate: a.rate,
        noise,
        ..ImuConfig::default()
    };
    let samples = synthesize_imu(&spline, &cfg).map_err(StageError::at("imu"))?;
    write_imu_csv(&samples, &a.output).map_err(StageError::at("write"))?;
    say(out, &format!("{} samples written to {}", samples.len(), a.output.display()))
}

fn events(a: EventsArgs, seed: u64, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let scene = load_scene(&a.scene).map_err(StageError::at("scene"))?;
    let bvh = build_bvh(&scene).map_err(StageError::at("scene"))?;
    let poses = read_trajectory(&a.trajectory).map_err(StageError::at("read"))?.open_poses();
    let spline = fit_spline(&poses).map_err(StageError::at("spline"))?;
    let dir = a.output.parent().unwrap_or(Path::new("."));
    let mut job = JobConfig::new(&a.scene, dir, seed);
    job.events.width = a.width;
    job.events.height = a.height;
    job.events.threshold = a.threshold;
    job.events.sim_rate = a.sim_rate;
    job.event_spp = a.spp;
    job.events.validate().map_err(StageError::at("config"))?;
    let events = render_events(&job, &scene, &bvh, &spline, &mut |_| {})?;
    write_events(&events, &a.output).map_err(StageError::at("write"))?;
    say(out, &format!("{} events written to {}", events.len(), a.output.display()))
}

fn rearrange_cmd(a: RearrangeArgs, seed: u64, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let scene = load_scene(&a.scene).map_err(StageError::at("scene"))?;
    let cfg = RearrangeConfig {
        seed,
        ..RearrangeConfig::default()
    };
    let (moved, report) = rearrange(&scene, &cfg).map_err(StageError::at("scene_change"))?;
    save_scene(&moved, &a.output).map_err(StageError::at("write"))?;
    for (&i, d) in report.selected.iter().zip(&report.displacements) {
        say(out, &format!("{} moved {d:.3} m", moved.objects[i].name))?;
    }
    say(
        out,
        &format!("{} of {} movable objects pushed", report.selected.len(), report.movable_count),
    )
}

fn relight(a: RelightArgs, seed: u64, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let scene = load_scene(&a.scene).map_err(StageError::at("scene"))?;
    let cfg = LightingConfig {
        seed,
        disable_probability: a.disable_probability,
        ..LightingConfig::default()
    };
    let (lit, _) = randomize_lighting(&scene, &cfg).map_err(StageError::at("scene_change"))?;
    save_scene(&lit, &a.output).map_err(StageError::at("write"))?;
    if let Some(path) = &a.lights {
        std::fs::write(path, lights_to_string(&lit.lights)).map_err(StageError::at("write"))?;
    }
    for l in &lit.lights {
        let state = if l.enabled { "on" } else { "off" };
        say(
            out,
            &format!("{} {state} {:.0} K x{:.3}", l.name, l.temperature.unwrap_or(f64::NAN), l.brightness),
        )?;
    }
    Ok(())
}

fn export(a: ExportArgs, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let poses = load_poses(&a.input, a.from)?;
    let format = match a.to {
        FileFormat::Tum => TrajectoryFormat::Tum,
        FileFormat::Euroc => TrajectoryFormat::Euroc,
        FileFormat::Native => return Err(StageError::new("config", "export writes tum or euroc")),
    };
    export_trajectory(&poses, format, &a.output).map_err(StageError::at("write"))?;
    say(out, &format!("{} poses written to {}", poses.len(), a.output.display()))
}

fn ate(a: AteArgs, out: &mut dyn std::io::Write) -> Result<(), StageError> {
    let est = load_poses(&a.est, a.est_format)?;
    let gt = load_poses(&a.gt, a.gt_format)?;
    let options = AteOptions {
        max_dt: a.max_dt,
        with_scale: a.scale,
    };
    let (result, _) = compute_ate_detailed(&est, &gt, &options).map_err(StageError::at("evaluation"))?;
    if a.json {
        let text = serde_json::to_string_pretty(&result).map_err(StageError::at("output"))?;
        say(out, &text)
    } else {
        write!(out, "{}", format_ate(&result)).map_err(StageError::at("output"))
    }
}

fn serve(a: ServeArgs) -> Result<(), StageError> {
    let runtime = tokio::runtime::Runtime::new().map_err(StageError::at("serve"))?;
    runtime.block_on(serve_preview(&a.scene, SocketAddr::new(a.host, a.port), &a.export_dir))
}
