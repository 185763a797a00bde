use rayon::prelude::*;

use super::bvh::Bvh;
use super::camera::{generate_ray, Lens};
use crate::geometry::Pose;
use crate::image::Image;

/// Flow value for pixels without a valid correspondence (Middlebury convention).
pub const FLOW_UNKNOWN: f32 = 1e10;

pub fn flow_is_known(f: &[f32; 2]) -> bool {
    f[0].abs() < 1e9 && f[1].abs() < 1e9
}

/// Forward optical flow of a static scene: each pixel-center hit at `pose_t`
/// reprojected under `pose_t1`, minus the pixel center.
pub fn compute_flow(bvh: &Bvh, pose_t: &Pose, pose_t1: &Pose, lens: &Lens, width: usize, height: usize) -> Image<[f32; 2]> {
    let to_t1 = pose_t1.inverse();
    let rows: Vec<Vec<[f32; 2]>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let unknown = [FLOW_UNKNOWN; 2];
                    let Some(ray) = generate_ray(lens, width, height, (x, y), [0.5, 0.5], [0.5, 0.5], pose_t) else {
                        return unknown;
                    };
                    let Some(hit) = bvh.intersect(&ray) else {
                        return unknown;
                    };
                    let p = to_t1 * ray.at(hit.t);
                    match lens.project(width, height, &p) {
                        Some([u, v]) => [(u - (x as f64 + 0.5)) as f32, (v - (y as f64 + 0.5)) as f32],
                        None => unknown,
                    }
                })
                .collect()
        })
        .collect();
    Image::from_vec(width, height, rows.into_iter().flatten().collect())
}

/// Flow image with every pixel unknown, used for the last frame of a sequence.
pub fn unknown_flow(width: usize, height: usize) -> Image<[f32; 2]> {
    Image::filled(width, height, [FLOW_UNKNOWN; 2])
}
