use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use super::{Keyframe, Trajectory, TrajectoryError, TrajectoryParams, TrajectoryType};
use crate::geometry::{interpolate_pose, look_at, orthonormal_basis, Pose};
use crate::rng::stream;
use crate::scene::FreeSpaceMap;

/// Integration substeps per frame period.
pub const SUBSTEPS_PER_FRAME: usize = 40;
/// Camera height band above the floor (m).
pub const MIN_CAMERA_HEIGHT: f64 = 1.0;
pub const MAX_CAMERA_HEIGHT: f64 = 2.0;
/// Largest deviation of the trajectory up vector from world up (radians).
pub const MAX_TILT: f64 = 5.0 * PI / 180.0;

const TRAJ_STREAM: u64 = 0x5452_414A;
/// Seconds between random force redraws.
const FORCE_INTERVAL: f64 = 0.1;
/// Random force magnitude per unit mass at v_mult = 1 (m/s²).
const BASE_FORCE: f64 = 2.0;
/// Linear velocity damping (1/s).
const DAMPING: f64 = 0.9;
/// View-direction turn rate at w_mult = 1 (rad/s).
const BASE_VIEW_RATE: f64 = 2.0;
/// Share of the random force acting vertically on the camera body.
const VERTICAL_FORCE_SCALE: f64 = 0.25;
const MAX_PITCH: f64 = 75.0 * PI / 180.0;
/// Hand-held look-at points stay at least this far below the camera (m).
const LOOK_BELOW: f64 = 0.2;
/// Spring gain pulling the look-forward target at w_mult = 1 (1/s²).
const FOLLOW_GAIN: f64 = 4.0;
const LOOK_AHEAD: f64 = 1.0;
const START_ATTEMPTS: usize = 1000;
/// Look-forward obstacle probe length on top of the turning radius (m).
const PROBE_BASE: f64 = 0.3;
/// Look-forward heading turns at most this share of the view rate.
const HEADING_RATE_SHARE: f64 = 0.5;
const MAX_HEADING_PITCH: f64 = 20.0 * PI / 180.0;
/// Speed floor when converting sideways force to a turn rate (m/s).
const MIN_TURN_SPEED: f64 = 0.2;

#[derive(Clone, Copy, Debug)]
struct Body {
    p: Point3<f64>,
    v: Vector3<f64>,
}

impl Body {
    /// Semi-implicit Euler step; an axis whose move is rejected reflects
    /// that velocity component instead.
    fn step(&mut self, force: &Vector3<f64>, dt: f64, accept: impl Fn(&Point3<f64>, &Point3<f64>) -> bool) {
        self.v += (force - self.v * DAMPING) * dt;
        for axis in 0..3 {
            let mut cand = self.p;
            cand[axis] += self.v[axis] * dt;
            if accept(&self.p, &cand) {
                self.p = cand;
            } else {
                self.v[axis] = -self.v[axis];
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vector3::new(x, y, z)
}

fn turn_toward(d: &Vector3<f64>, target: &Vector3<f64>, max_angle: f64) -> Vector3<f64> {
    let angle = d.dot(target).clamp(-1.0, 1.0).acos();
    if angle <= max_angle {
        return *target;
    }
    let axis = d.cross(target).try_normalize(1e-12).unwrap_or_else(|| orthonormal_basis(d).0);
    UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis), max_angle) * d
}

fn clamp_pitch(d: &Vector3<f64>) -> Vector3<f64> {
    let max_z = MAX_PITCH.sin();
    if d.z.abs() <= max_z {
        return *d;
    }
    let h = d.xy().try_normalize(1e-12).unwrap_or(nalgebra::Vector2::x());
    let c = MAX_PITCH.cos();
    Vector3::new(h.x * c, h.y * c, max_z.copysign(d.z))
}

fn in_band(free: &FreeSpaceMap, z: f64) -> bool {
    let h = z - free.floor_height;
    (MIN_CAMERA_HEIGHT..=MAX_CAMERA_HEIGHT).contains(&h)
}

fn camera_ok(free: &FreeSpaceMap, p: &Point3<f64>) -> bool {
    in_band(free, p.z) && free.is_free(p)
}

/// Look-forward camera: moves along a heading that turns at a bounded rate,
/// so the direction of travel never jumps. Obstacles ahead turn it toward
/// the freer side and brake it; a blocked move stops it.
struct Walker {
    p: Point3<f64>,
    heading: Vector3<f64>,
    speed: f64,
    turn_sign: Option<f64>,
    bumped: bool,
}

impl Walker {
    fn step(&mut self, free: &FreeSpaceMap, force: &Vector3<f64>, force_mag: f64, max_turn: f64, dt: f64) {
        let h = self.heading;
        // A turn in progress continues until the path is clear for a longer stretch.
        let extra = if self.turn_sign.is_some() { PROBE_BASE } else { 0.0 };
        // Look one turning radius ahead so there is room to turn away.
        let probe = PROBE_BASE + self.speed * dt / max_turn + extra;
        let samples = ((probe / (0.5 * free.resolution)).ceil() as usize).max(1);
        let blocked = |d: &Vector3<f64>| {
            (1..=samples).any(|i| !camera_ok(free, &(self.p + d * (probe * i as f64 / samples as f64))))
        };
        let mut along = force.dot(&h);
        let mut turn = force - h * along;
        if self.bumped || blocked(&h) {
            let left = Vector3::new(-h.y, h.x, 0.0).try_normalize(1e-9).unwrap_or_else(Vector3::x);
            // Turn toward the nearest clear heading and keep turning that
            // way until the path ahead clears.
            let sign = *self.turn_sign.get_or_insert_with(|| {
                (1..=12)
                    .flat_map(|k| [1.0, -1.0].map(|sg| (sg, sg * k as f64 * PI / 12.0)))
                    .find(|&(_, a)| !blocked(&(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a) * h)))
                    .map_or(1.0, |(sg, _)| sg)
            });
            turn = left * (sign * force_mag);
            along = -force_mag;
        } else {
            self.turn_sign = None;
        }
        // Keep clear of the height band limits.
        let ahead_z = self.p.z + h.z * probe;
        if !in_band(free, ahead_z) {
            turn.z -= (ahead_z - (free.floor_height + 0.5 * (MIN_CAMERA_HEIGHT + MAX_CAMERA_HEIGHT))).signum() * force_mag;
        }
        self.speed = (self.speed + (along - DAMPING * self.speed) * dt).max(0.0);
        let rate = turn.norm() / self.speed.max(MIN_TURN_SPEED);
        if let Some(axis) = h.cross(&turn).try_normalize(1e-12) {
            // Standing still, the heading may turn as fast as the view.
            let cap = if self.speed == 0.0 { max_turn / HEADING_RATE_SHARE } else { max_turn };
            let angle = (rate * dt).min(cap);
            self.heading = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis), angle) * h;
        }
        self.heading = clamp_heading_pitch(&self.heading);
        let cand = self.p + self.heading * (self.speed * dt);
        self.bumped = !camera_ok(free, &cand);
        if self.bumped {
            self.speed = 0.0;
        } else {
            self.p = cand;
        }
    }
}

fn clamp_heading_pitch(d: &Vector3<f64>) -> Vector3<f64> {
    let max_z = MAX_HEADING_PITCH.sin();
    if d.z.abs() <= max_z {
        return d.normalize();
    }
    let h = d.xy().try_normalize(1e-12).unwrap_or(nalgebra::Vector2::x());
    let c = MAX_HEADING_PITCH.cos();
    Vector3::new(h.x * c, h.y * c, max_z.copysign(d.z))
}

fn start_position(free: &FreeSpaceMap, rng: &mut ChaCha8Rng) -> Result<Point3<f64>, TrajectoryError> {
    let (lo, hi) = (free.floor_height + MIN_CAMERA_HEIGHT, free.floor_height + MAX_CAMERA_HEIGHT);
    let cells: Vec<[usize; 3]> = free
        .free_cells()
        .filter(|&c| {
            let b = free.cell_bounds(c);
            b.max.z > lo && b.min.z < hi
        })
        .collect();
    if cells.is_empty() {
        return Err(TrajectoryError::NoFreeSpace);
    }
    // Prefer cells whose horizontal neighbours are free too.
    let roomy = |c: [usize; 3]| {
        let p = free.cell_center(c);
        let r = free.resolution;
        [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)]
            .iter()
            .all(|&(dx, dy)| free.is_free(&Point3::new(p.x + dx, p.y + dy, p.z)))
    };
    for attempt in 0..START_ATTEMPTS {
        let c = cells[rng.random_range(0..cells.len())];
        if attempt < START_ATTEMPTS / 2 && !roomy(c) {
            continue;
        }
        let b = free.cell_bounds(c);
        let m = 1e-6 * free.resolution;
        let z0 = b.min.z.max(lo) + m;
        let z1 = b.max.z.min(hi) - m;
        if z1 <= z0 {
            continue;
        }
        let p = Point3::new(
            rng.random_range(b.min.x + m..b.max.x - m),
            rng.random_range(b.min.y + m..b.max.y - m),
            rng.random_range(z0..z1),
        );
        if camera_ok(free, &p) {
            return Ok(p);
        }
    }
    Err(TrajectoryError::Unreachable("no valid start position found".into()))
}

#[derive(Clone, Copy)]
struct State {
    position: Point3<f64>,
    view: Vector3<f64>,
}

/// Simulates the camera and look-at bodies and samples keyframes at the
/// frame rate, each with a shutter-close pose `exposure` seconds later.
pub fn generate_trajectory(free: &FreeSpaceMap, params: &TrajectoryParams) -> Result<Trajectory, TrajectoryError> {
    params.validate()?;
    let frames = params.frame_count()?;
    let mut rng = stream(params.seed, &[TRAJ_STREAM]);
    let dt = 1.0 / (params.frame_rate * SUBSTEPS_PER_FRAME as f64);
    let force_steps = ((FORCE_INTERVAL / dt).round() as usize).max(1);
    let force_mag = BASE_FORCE * params.v_mult;
    let max_turn = BASE_VIEW_RATE * params.w_mult * dt;
    let hand_held = params.traj_type == TrajectoryType::HandHeld;
    let look_forward = params.traj_type == TrajectoryType::LookForward;

    let tilt = rng.random_range(0.0..=MAX_TILT);
    let azimuth = rng.random_range(0.0..TAU);
    let up = Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());

    let start = start_position(free, &mut rng)?;
    let heading = rng.random_range(0.0..TAU);
    let flat = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let mut cam = Body {
        p: start,
        v: Vector3::zeros(),
    };
    let mut walker = Walker {
        p: start,
        heading: flat,
        speed: 0.5 * params.v_mult,
        turn_sign: None,
        bumped: false,
    };
    let mut target = Body {
        p: start + flat * LOOK_AHEAD,
        v: Vector3::zeros(),
    };
    let mut target_offset = flat * LOOK_AHEAD;
    if hand_held {
        target.p.z = start.z - 2.0 * LOOK_BELOW;
    }
    let mut view = (target.p - cam.p).normalize();
    if !look_forward {
        view = clamp_pitch(&view);
    }

    let grid_min = free.origin;
    let grid_max = free.origin
        + Vector3::new(free.dims[0] as f64, free.dims[1] as f64, free.dims[2] as f64) * free.resolution;
    let in_grid = |p: &Point3<f64>| (0..3).all(|k| p[k] >= grid_min[k] && p[k] <= grid_max[k]);

    let total = (frames + 1) * SUBSTEPS_PER_FRAME;
    let mut states = Vec::with_capacity(total + 1);
    states.push(State { position: cam.p, view });
    let (mut cam_force, mut target_force) = (Vector3::zeros(), Vector3::zeros());
    for step in 0..total {
        if step % force_steps == 0 {
            cam_force = random_unit(&mut rng) * force_mag;
            cam_force.z *= VERTICAL_FORCE_SCALE;
            target_force = random_unit(&mut rng) * force_mag;
            if look_forward {
                // Forces push forward on average.
                let along = cam_force.dot(&walker.heading);
                if along < 0.0 {
                    cam_force -= walker.heading * (2.0 * along);
                }
            }
        }

        let position = if look_forward {
            walker.step(free, &cam_force, force_mag, HEADING_RATE_SHARE * max_turn, dt);
            // Critically damped spring on the offset from the camera, so
            // translation alone never makes the target lag.
            let k = FOLLOW_GAIN * params.w_mult * params.w_mult;
            let accel = (walker.heading * LOOK_AHEAD - target_offset) * k - target.v * (2.0 * k.sqrt());
            target.v += accel * dt;
            target_offset += target.v * dt;
            target.p = walker.p + target_offset;
            walker.p
        } else {
            cam.step(&cam_force, dt, |_, c| camera_ok(free, c));
            let limit = cam.p.z - LOOK_BELOW;
            target.step(&target_force, dt, |cur, cand| {
                let free_ok = free.is_free(cand) || !free.is_free(cur);
                let below_ok = !hand_held || cand.z <= limit || cand.z <= cur.z;
                in_grid(cand) && free_ok && below_ok
            });
            if hand_held && target.p.z > limit {
                target.p.z = limit;
                target.v.z = -target.v.z.abs();
            }
            cam.p
        };

        if let Some(goal_dir) = (target.p - position).try_normalize(1e-9) {
            view = turn_toward(&view, &goal_dir, max_turn);
            if !look_forward {
                view = clamp_pitch(&view);
            }
        }
        states.push(State { position, view });
    }

    let pose_at = |s: &State| look_at(&s.position, &(s.position + s.view), &up);
    let exposure_steps = params.exposure() / dt;
    let whole = exposure_steps.floor() as usize;
    let frac = exposure_steps - whole as f64;
    let keyframes = (0..frames)
        .map(|i| {
            let base = i * SUBSTEPS_PER_FRAME;
            let open = pose_at(&states[base]);
            let close = close_pose(free, &states, base + whole, frac, &pose_at);
            Keyframe {
                timestamp: i as f64 / params.frame_rate,
                shutter_open_pose: open,
                shutter_close_pose: close,
            }
        })
        .collect();
    Ok(Trajectory {
        params: params.clone(),
        up,
        frames: keyframes,
        jitter: Vec::new(),
    })
}

fn close_pose(
    free: &FreeSpaceMap,
    states: &[State],
    step: usize,
    frac: f64,
    pose_at: &impl Fn(&State) -> Pose,
) -> Pose {
    let a = pose_at(&states[step]);
    if frac < 1e-9 {
        return a;
    }
    let b = pose_at(&states[step + 1]);
    let p = interpolate_pose(&a, &b, frac);
    if camera_ok(free, &Point3::from(p.translation.vector)) {
        p
    } else if frac < 0.5 {
        a
    } else {
        b
    }
}
