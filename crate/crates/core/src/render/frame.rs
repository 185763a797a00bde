use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::Bvh;
use super::camera::{generate_ray, Lens};
use super::integrator::{hit_info, surface_albedo, trace_path};
use super::RenderError;
use crate::geometry::{interpolate_pose, Pose, Rgb};
use crate::image::Image;
use crate::rng::derive_seed;
use crate::scene::Scene;

pub const TILE: usize = 16;
const MAX_RESAMPLES: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub spp: u32,
    pub max_bounces: u32,
    pub shutter_subframes: u32,
    pub seed: u64,
    pub clamp_radiance: Option<f64>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            spp: 256,
            max_bounces: 6,
            shutter_subframes: 8,
            seed: 0,
            clamp_radiance: None,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::Settings(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be >= 1");
        }
        if self.spp == 0 {
            return bad("spp must be >= 1");
        }
        if self.max_bounces == 0 {
            return bad("max_bounces must be >= 1");
        }
        if self.shutter_subframes == 0 {
            return bad("shutter_subframes must be >= 1");
        }
        if self.clamp_radiance.is_some_and(|c| !(c > 0.0)) {
            return bad("clamp_radiance must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    pub samples: u64,
    /// Samples drawn again because the path estimate was NaN or infinite.
    pub nonfinite_resamples: u64,
}

impl RenderStats {
    fn add(&mut self, o: &RenderStats) {
        self.samples += o.samples;
        self.nonfinite_resamples += o.nonfinite_resamples;
    }
}

/// Single-ray passes through pixel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GtPasses {
    /// Euclidean distance to the first hit (m), 0 where nothing was hit.
    pub depth: Image<f32>,
    /// Unit shading normals in the camera frame, zero where nothing was hit.
    pub normals: Image<[f32; 3]>,
    /// Textured lambertian albedo.
    pub albedo: Image<[f32; 3]>,
    /// NYU40 class, 0 = background.
    pub semantic: Image<u16>,
    /// Instance id, 0 = background.
    pub instance: Image<u16>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub timestamp: f64,
    pub shutter_open_pose: Pose,
    pub shutter_close_pose: Pose,
    /// Linear radiance.
    pub rgb: Image<[f32; 3]>,
    pub gt: GtPasses,
    /// Per-pixel motion toward the next frame (pixels); see `FLOW_UNKNOWN`.
    pub flow: Option<Image<[f32; 2]>>,
    pub stats: RenderStats,
}

/// Poses at the centers of `k` equal slices of the exposure.
pub fn shutter_poses(open: &Pose, close: &Pose, k: u32) -> Vec<Pose> {
    (0..k)
        .map(|i| interpolate_pose(open, close, (i as f64 + 0.5) / k as f64))
        .collect()
}

pub fn midpoint_pose(open: &Pose, close: &Pose) -> Pose {
    interpolate_pose(open, close, 0.5)
}

fn tile_grid(width: usize, height: usize) -> Vec<(usize, usize)> {
    let (tx, ty) = (width.div_ceil(TILE), height.div_ceil(TILE));
    (0..ty).flat_map(|y| (0..tx).map(move |x| (x, y))).collect()
}

/// Radiance image averaged over `spp` samples per pixel. Sample `s` is
/// traced from `poses[s mod poses.len()]`. Each 16×16 tile draws from its
/// own stream seeded by `(seed, frame, tile)`, so output does not depend on
/// scheduling.
pub fn render_rgb(
    scene: &Scene,
    bvh: &Bvh,
    lens: &Lens,
    settings: &RenderSettings,
    poses: &[Pose],
    frame_index: u64,
) -> (Image<[f32; 3]>, RenderStats) {
    let (w, h) = (settings.width, settings.height);
    let tiles = tile_grid(w, h);
    let rendered: Vec<(Vec<[f32; 3]>, RenderStats)> = tiles
        .par_iter()
        .enumerate()
        .map(|(ti, &(tx, ty))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[frame_index, ti as u64]));
            let mut stats = RenderStats::default();
            let (x0, y0) = (tx * TILE, ty * TILE);
            let (x1, y1) = ((x0 + TILE).min(w), (y0 + TILE).min(h));
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let mut sum = Rgb::zeros();
                    for s in 0..settings.spp {
                        let pose = &poses[s as usize % poses.len()];
                        sum += pixel_sample(scene, bvh, lens, settings, pose, (x, y), &mut rng, &mut stats);
                    }
                    let mean = sum / settings.spp as f64;
                    out.push([mean.x as f32, mean.y as f32, mean.z as f32]);
                }
            }
            (out, stats)
        })
        .collect();

    let mut img = Image::filled(w, h, [0.0f32; 3]);
    let mut stats = RenderStats::default();
    for (&(tx, ty), (pixels, st)) in tiles.iter().zip(&rendered) {
        stats.add(st);
        let (x0, y0) = (tx * TILE, ty * TILE);
        let tw = (x0 + TILE).min(w) - x0;
        for (i, p) in pixels.iter().enumerate() {
            *img.get_mut(x0 + i % tw, y0 + i / tw) = *p;
        }
    }
    (img, stats)
}

#[allow(clippy::too_many_arguments)]
fn pixel_sample(
    scene: &Scene,
    bvh: &Bvh,
    lens: &Lens,
    settings: &RenderSettings,
    pose: &Pose,
    pixel: (usize, usize),
    rng: &mut ChaCha8Rng,
    stats: &mut RenderStats,
) -> Rgb {
    stats.samples += 1;
    for _ in 0..=MAX_RESAMPLES {
        let jitter = [rng.random(), rng.random()];
        let lens_sample = [rng.random(), rng.random()];
        let Some(ray) = generate_ray(lens, settings.width, settings.height, pixel, jitter, lens_sample, pose) else {
            return Rgb::zeros();
        };
        let l = trace_path(ray, scene, bvh, rng, settings.max_bounces);
        if l.iter().all(|c| c.is_finite()) {
            return match settings.clamp_radiance {
                Some(c) if l.max() > c => l * (c / l.max()),
                _ => l,
            };
        }
        stats.nonfinite_resamples += 1;
    }
    Rgb::zeros()
}

/// Depth, normal, albedo, semantic and instance passes from one ray per pixel center.
pub fn render_gt(scene: &Scene, bvh: &Bvh, lens: &Lens, width: usize, height: usize, pose: &Pose) -> GtPasses {
    type Px = (f32, [f32; 3], [f32; 3], u16, u16);
    let rows: Vec<Vec<Px>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let Some(ray) = generate_ray(lens, width, height, (x, y), [0.5, 0.5], [0.5, 0.5], pose) else {
                        return (0.0, [0.0; 3], [0.0; 3], 0, 0);
                    };
                    let Some(hit) = bvh.intersect(&ray) else {
                        return (0.0, [0.0; 3], [0.0; 3], 0, 0);
                    };
                    let info = hit_info(bvh, &ray, &hit);
                    let n = pose.rotation.inverse() * info.shading_normal;
                    let a = surface_albedo(scene, &hit, &info);
                    let obj = &scene.objects[hit.object as usize];
                    (
                        hit.t as f32,
                        [n.x as f32, n.y as f32, n.z as f32],
                        [a.x as f32, a.y as f32, a.z as f32],
                        obj.nyu40_class,
                        obj.instance_id.min(u16::MAX as u32) as u16,
                    )
                })
                .collect()
        })
        .collect();
    let px: Vec<Px> = rows.into_iter().flatten().collect();
    GtPasses {
        depth: Image::from_vec(width, height, px.iter().map(|p| p.0).collect()),
        normals: Image::from_vec(width, height, px.iter().map(|p| p.1).collect()),
        albedo: Image::from_vec(width, height, px.iter().map(|p| p.2).collect()),
        semantic: Image::from_vec(width, height, px.iter().map(|p| p.3).collect()),
        instance: Image::from_vec(width, height, px.iter().map(|p| p.4).collect()),
    }
}

/// Motion-blurred RGB over the exposure plus ground-truth passes at the
/// shutter midpoint. Flow is left unset.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    scene: &Scene,
    bvh: &Bvh,
    pose_open: &Pose,
    pose_close: &Pose,
    lens: &Lens,
    settings: &RenderSettings,
    frame_index: u64,
    timestamp: f64,
) -> Result<FrameBundle, RenderError> {
    settings.validate()?;
    lens.validate().map_err(RenderError::Lens)?;
    let poses = shutter_poses(pose_open, pose_close, settings.shutter_subframes);
    let (rgb, stats) = render_rgb(scene, bvh, lens, settings, &poses, frame_index);
    let gt = render_gt(
        scene,
        bvh,
        lens,
        settings.width,
        settings.height,
        &midpoint_pose(pose_open, pose_close),
    );
    Ok(FrameBundle {
        timestamp,
        shutter_open_pose: *pose_open,
        shutter_close_pose: *pose_close,
        rgb,
        gt,
        flow: None,
        stats,
    })
}
