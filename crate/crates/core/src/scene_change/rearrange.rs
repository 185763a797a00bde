use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SceneChangeError;
use crate::geometry::Aabb;
use crate::rng;
use crate::scene::Scene;

const REARRANGE_STREAM: u64 = 0x5245_4152;
const CONTACT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RearrangeConfig {
    /// Range of the selected share of movable objects.
    pub fraction_range: [f64; 2],
    /// Range of the planar push acceleration (m/s²).
    pub accel_range: [f64; 2],
    pub impulse_duration: f64,
    pub settle_time: f64,
    pub gravity: f64,
    /// Integration rate (Hz).
    pub rate: f64,
    pub seed: u64,
}

impl Default for RearrangeConfig {
    fn default() -> Self {
        Self {
            fraction_range: [0.05, 0.45],
            accel_range: [0.5, 2.0],
            impulse_duration: 1.0,
            settle_time: 10.0,
            gravity: 9.81,
            rate: 100.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RearrangeReport {
    pub fraction: f64,
    pub movable_count: usize,
    /// Indices of the pushed objects, in push order.
    pub selected: Vec<usize>,
    /// Planar displacement of each pushed object (m).
    pub displacements: Vec<f64>,
}

/// Distance travelled at time `t` by a body pushed with `accel` for
/// `duration` seconds, then decelerating at `mu·g` until it stops.
fn travelled(t: f64, accel: f64, duration: f64, decel: f64) -> f64 {
    if t <= duration {
        return 0.5 * accel * t * t;
    }
    let v1 = accel * duration;
    let x1 = 0.5 * accel * duration * duration;
    let stop = if decel > 0.0 { v1 / decel } else { f64::INFINITY };
    let tau = (t - duration).min(stop);
    x1 + v1 * tau - 0.5 * decel * tau * tau
}

/// Unobstructed slide distance, sampled at the configured rate within the settle time.
pub fn slide_distance(accel: f64, mu: f64, config: &RearrangeConfig) -> f64 {
    let steps = (config.settle_time * config.rate).round() as usize;
    travelled(steps as f64 / config.rate, accel, config.impulse_duration, mu * config.gravity)
}

/// Range of `s ≥ 0` for which `b + s·d` overlaps `o` in the ground plane.
fn planar_entry(b: &Aabb, o: &Aabb, d: [f64; 2]) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for a in 0..2 {
        let (l, h) = (o.min[a] - b.max[a], o.max[a] - b.min[a]);
        if d[a].abs() < 1e-15 {
            if !(l < -CONTACT_EPS && h > CONTACT_EPS) {
                return None;
            }
        } else {
            let (s0, s1) = (l / d[a], h / d[a]);
            lo = lo.max(s0.min(s1));
            hi = hi.min(s0.max(s1));
        }
    }
    (lo < hi).then_some((lo, hi))
}

fn vertical_overlap(a: &Aabb, b: &Aabb) -> bool {
    a.max.z.min(b.max.z) - a.min.z.max(b.min.z) > CONTACT_EPS
}

/// Largest distance the box can slide along `d` before touching an obstacle or the bounds.
fn free_run(b: &Aabb, d: [f64; 2], obstacles: &[Aabb], bounds: &Aabb) -> f64 {
    let mut limit = f64::INFINITY;
    for a in 0..2 {
        if d[a] > 0.0 {
            limit = limit.min((bounds.max[a] - b.max[a]) / d[a]);
        } else if d[a] < 0.0 {
            limit = limit.min((bounds.min[a] - b.min[a]) / d[a]);
        }
    }
    for o in obstacles.iter().filter(|o| vertical_overlap(b, o)) {
        if let Some((enter, exit)) = planar_entry(b, o, d) {
            if enter >= -CONTACT_EPS {
                limit = limit.min(enter);
            } else if exit > CONTACT_EPS {
                // Already interpenetrating: motion is blocked unless it separates the boxes.
                let c = b.center() - o.center();
                if c.x * d[0] + c.y * d[1] <= 0.0 {
                    limit = 0.0;
                }
            }
        }
    }
    limit.max(0.0)
}

/// Pushes one object along the ground direction `angle` (radians from +x)
/// with acceleration `accel` and slides it to rest, stopping at contacts.
/// Returns the planar displacement.
pub fn simulate_push(
    scene: &mut Scene,
    index: usize,
    angle: f64,
    accel: f64,
    config: &RearrangeConfig,
) -> Result<f64, SceneChangeError> {
    if index >= scene.objects.len() {
        return Err(SceneChangeError::NoSuchObject(index));
    }
    let d = [angle.cos(), angle.sin()];
    let hull = scene.objects[index].world_hull();
    let obstacles: Vec<Aabb> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .map(|(_, o)| o.world_hull())
        .collect();
    let decel = scene.objects[index].physical.friction * config.gravity;
    let run = free_run(&hull, d, &obstacles, &scene.bounds);

    let steps = (config.settle_time * config.rate).round() as usize;
    let mut s = 0.0;
    for n in 1..=steps {
        let next = travelled(n as f64 / config.rate, accel, config.impulse_duration, decel);
        if next >= run {
            s = run;
            break;
        }
        if next == s && n as f64 / config.rate > config.impulse_duration {
            break;
        }
        s = next;
    }
    let o = &mut scene.objects[index];
    o.translation.x += s * d[0];
    o.translation.y += s * d[1];
    Ok(s)
}

/// Pushes a random subset of the movable objects one after another.
pub fn rearrange(scene: &Scene, config: &RearrangeConfig) -> Result<(Scene, RearrangeReport), SceneChangeError> {
    let [f_lo, f_hi] = config.fraction_range;
    let [a_lo, a_hi] = config.accel_range;
    if !(0.0 < f_lo && f_lo <= f_hi && f_hi <= 1.0) || !(0.0 <= a_lo && a_lo <= a_hi) || !(config.rate > 0.0) {
        return Err(SceneChangeError::Config("invalid fraction, acceleration or rate".into()));
    }
    let movable: Vec<usize> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.physical.movable)
        .map(|(i, _)| i)
        .collect();
    if movable.is_empty() {
        return Err(SceneChangeError::NoMovables);
    }

    let mut rng = rng::stream(config.seed, &[REARRANGE_STREAM]);
    let fraction = f_lo + (f_hi - f_lo) * rng.random::<f64>();
    let count = ((fraction * movable.len() as f64).floor() as usize).clamp(1, movable.len());
    let picks = rand::seq::index::sample(&mut rng, movable.len(), count);

    let mut out = scene.clone();
    let mut report = RearrangeReport {
        fraction,
        movable_count: movable.len(),
        ..Default::default()
    };
    for p in picks.iter() {
        let index = movable[p];
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let accel = a_lo + (a_hi - a_lo) * rng.random::<f64>();
        let moved = simulate_push(&mut out, index, angle, accel, config)?;
        report.selected.push(index);
        report.displacements.push(moved);
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::cube_scene;
    use nalgebra::{Point3, Vector3};

    #[test]
    fn kinematics_match_closed_form() {
        let d = slide_distance(1.0, 0.2, &RearrangeConfig::default());
        let ideal = 0.5 + 1.0 / (2.0 * 0.2 * 9.81);
        assert!((d - ideal).abs() < 1e-12);
    }

    #[test]
    fn free_push_slides_ideal_distance() {
        let mut scene = cube_scene();
        scene.bounds = Aabb::new(Point3::new(-10.0, -10.0, -2.0), Point3::new(10.0, 10.0, 2.0));
        scene.objects[0].physical.friction = 0.2;
        let cfg = RearrangeConfig::default();
        let moved = simulate_push(&mut scene, 0, 0.0, 1.0, &cfg).unwrap();
        assert!((moved - 0.754_841).abs() < 0.02 * 0.754_841);
        assert!((scene.objects[0].translation - Vector3::new(moved, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wall_stops_motion_at_contact() {
        let mut scene = cube_scene();
        scene.objects[0].physical.friction = 0.08;
        let moved = simulate_push(&mut scene, 0, 0.0, 2.0, &RearrangeConfig::default()).unwrap();
        assert!((moved - 1.5).abs() < 1e-9);
    }

    #[test]
    fn boxed_in_object_stays() {
        let mut scene = cube_scene();
        scene.bounds = Aabb::new(Point3::new(-0.5, -0.5, -0.5), Point3::new(0.5, 0.5, 0.5));
        let (out, report) = rearrange(&scene, &RearrangeConfig::default()).unwrap();
        assert_eq!(report.displacements, vec![0.0]);
        assert_eq!(out, scene);
    }

    #[test]
    fn unmovable_scene_is_an_error() {
        let mut scene = cube_scene();
        scene.objects[0].physical.movable = false;
        assert_eq!(rearrange(&scene, &RearrangeConfig::default()).unwrap_err(), SceneChangeError::NoMovables);
    }
}
