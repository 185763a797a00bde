//! CPU path tracer with motion blur, ground-truth passes, optical flow and
//! depth-sensor noise.

mod bvh;
mod camera;
mod flow;
mod frame;
mod integrator;
mod kinect;
mod material;

use thiserror::Error;

pub use bvh::{brute_force_intersect, Bvh, Hit, Ray, Triangle, TriangleShading};
pub use camera::{concentric_disk, generate_ray, Lens, DEFAULT_FOCAL_PX};
pub use flow::{compute_flow, flow_is_known, unknown_flow, FLOW_UNKNOWN};
pub use frame::{
    midpoint_pose, render_frame, render_gt, render_rgb, shutter_poses, FrameBundle, GtPasses, RenderSettings,
    RenderStats, TILE,
};
pub use integrator::{trace_path, ROULETTE_START};
pub use kinect::{apply_kinect_noise, KinectNoise};
pub use material::{fresnel_dielectric, BsdfSample, SurfacePoint};

use crate::scene::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("invalid render settings: {0}")]
    Settings(String),
    #[error("invalid lens: {0}")]
    Lens(String),
    #[error("scene has no geometry")]
    EmptyScene,
}

/// Builds the acceleration structure for a non-empty scene.
pub fn build_bvh(scene: &Scene) -> Result<Bvh, RenderError> {
    if scene.triangle_count() == 0 {
        return Err(RenderError::EmptyScene);
    }
    Ok(Bvh::build(scene))
}
