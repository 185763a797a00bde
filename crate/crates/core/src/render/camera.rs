//! Lens models mapping pixels to camera rays and camera points back to pixels.
//!
//! Camera frame: x right, y down, z forward.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::bvh::Ray;
use crate::geometry::Pose;

pub const DEFAULT_FOCAL_PX: f64 = 600.0;

fn default_focal() -> f64 {
    DEFAULT_FOCAL_PX
}

fn default_fisheye_fov() -> f64 {
    PI
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lens {
    Pinhole {
        #[serde(default = "default_focal")]
        focal_px: f64,
    },
    ThinLens {
        #[serde(default = "default_focal")]
        focal_px: f64,
        aperture_radius: f64,
        focus_distance: f64,
    },
    /// Equidistant projection `r = f·θ`; the image circle of diameter
    /// `min(width, height)` spans `fov`.
    Fisheye {
        #[serde(default = "default_fisheye_fov")]
        fov: f64,
    },
    /// Equirectangular projection over the full sphere.
    Panorama,
}

impl Default for Lens {
    fn default() -> Self {
        Lens::Pinhole {
            focal_px: DEFAULT_FOCAL_PX,
        }
    }
}

impl Lens {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Lens::Pinhole { focal_px } if !(focal_px > 0.0) => Err("focal_px must be > 0".into()),
            Lens::ThinLens {
                focal_px,
                aperture_radius,
                focus_distance,
            } => {
                if !(focal_px > 0.0) {
                    Err("focal_px must be > 0".into())
                } else if !(focus_distance > 0.0) {
                    Err("focus_distance must be > 0".into())
                } else if !(aperture_radius >= 0.0) {
                    Err("aperture_radius must be >= 0".into())
                } else {
                    Ok(())
                }
            }
            Lens::Fisheye { fov } if !(fov > 0.0 && fov <= TAU) => Err("fisheye fov outside (0, 2π]".into()),
            _ => Ok(()),
        }
    }

    /// Focal length in pixels where one is defined.
    pub fn focal_px(&self) -> Option<f64> {
        match *self {
            Lens::Pinhole { focal_px } | Lens::ThinLens { focal_px, .. } => Some(focal_px),
            _ => None,
        }
    }

    /// Camera-frame ray through image position `(px, py)` (continuous pixel
    /// coordinates, pixel `x` spans `[x, x+1)`). `None` outside a fisheye circle.
    pub fn camera_ray(&self, width: usize, height: usize, px: f64, py: f64, lens_sample: [f64; 2]) -> Option<Ray> {
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = (w / 2.0, h / 2.0);
        match *self {
            Lens::Pinhole { focal_px } => Some(Ray::new(
                Point3::origin(),
                Vector3::new((px - cx) / focal_px, (py - cy) / focal_px, 1.0).normalize(),
            )),
            Lens::ThinLens {
                focal_px,
                aperture_radius,
                focus_distance,
            } => {
                let d = Vector3::new((px - cx) / focal_px, (py - cy) / focal_px, 1.0);
                let focus = Point3::from(d * focus_distance);
                let [lx, ly] = concentric_disk(lens_sample);
                let origin = Point3::new(lx * aperture_radius, ly * aperture_radius, 0.0);
                Some(Ray::new(origin, (focus - origin).normalize()))
            }
            Lens::Fisheye { fov } => {
                let r_max = w.min(h) / 2.0;
                let (dx, dy) = (px - cx, py - cy);
                let r = dx.hypot(dy);
                if r > r_max {
                    return None;
                }
                let theta = r / r_max * (fov / 2.0);
                let phi = dy.atan2(dx);
                let st = theta.sin();
                Some(Ray::new(
                    Point3::origin(),
                    Vector3::new(st * phi.cos(), st * phi.sin(), theta.cos()),
                ))
            }
            Lens::Panorama => {
                let az = px / w * TAU - PI;
                let el = FRAC_PI_2 - py / h * PI;
                Some(Ray::new(
                    Point3::origin(),
                    Vector3::new(el.cos() * az.sin(), -el.sin(), el.cos() * az.cos()),
                ))
            }
        }
    }

    /// Continuous image position of a camera-frame point, or `None` when it
    /// is not imaged (behind a perspective camera or outside the fisheye circle).
    /// Thin-lens projection uses the pinhole through the lens center.
    pub fn project(&self, width: usize, height: usize, p: &Point3<f64>) -> Option<[f64; 2]> {
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = (w / 2.0, h / 2.0);
        match *self {
            Lens::Pinhole { focal_px } | Lens::ThinLens { focal_px, .. } => {
                (p.z > 0.0).then(|| [focal_px * p.x / p.z + cx, focal_px * p.y / p.z + cy])
            }
            Lens::Fisheye { fov } => {
                let n = p.coords.norm();
                if n == 0.0 {
                    return None;
                }
                let theta = (p.z / n).clamp(-1.0, 1.0).acos();
                if theta > fov / 2.0 {
                    return None;
                }
                let r = theta / (fov / 2.0) * (w.min(h) / 2.0);
                let phi = p.y.atan2(p.x);
                Some([cx + r * phi.cos(), cy + r * phi.sin()])
            }
            Lens::Panorama => {
                let n = p.coords.norm();
                if n == 0.0 {
                    return None;
                }
                let el = (-p.y / n).clamp(-1.0, 1.0).asin();
                let az = p.x.atan2(p.z);
                Some([(az + PI) / TAU * w, (FRAC_PI_2 - el) / PI * h])
            }
        }
    }
}

/// Shirley–Chiu concentric mapping of the unit square onto the unit disk.
pub fn concentric_disk([u, v]: [f64; 2]) -> [f64; 2] {
    let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
    if a == 0.0 && b == 0.0 {
        return [0.0, 0.0];
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, std::f64::consts::FRAC_PI_4 * (b / a))
    } else {
        (b, FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (a / b))
    };
    [r * phi.cos(), r * phi.sin()]
}

/// World-space ray for pixel `(x, y)` with sub-pixel offset `sample ∈ [0,1)²`.
pub fn generate_ray(
    lens: &Lens,
    width: usize,
    height: usize,
    pixel: (usize, usize),
    sample: [f64; 2],
    lens_sample: [f64; 2],
    pose: &Pose,
) -> Option<Ray> {
    let px = pixel.0 as f64 + sample[0];
    let py = pixel.1 as f64 + sample[1];
    let r = lens.camera_ray(width, height, px, py, lens_sample)?;
    Some(Ray::new(pose * r.origin, pose.rotation * r.dir))
}
