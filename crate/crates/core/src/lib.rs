//! Synthetic RGB-D, inertial and event-camera sequence generation for
//! indoor SLAM benchmarking.
//!
//! The crate is organised along the data flow of a sequence:
//!
//! * [`scene`] loads scene documents and meshes, validates them and builds
//!   free-space occupancy grids.
//! * [`scene_change`] rearranges movable furniture and randomizes lighting.
//! * [`trajectory`] synthesizes base camera trajectories and adds
//!   data-driven hand-held jitter.
//! * [`spline`] turns keyframe poses into a continuous-time cubic B-spline
//!   and synthesizes 800 Hz IMU readings from it.
//! * [`render`] is a CPU path tracer producing motion-blurred RGB plus
//!   depth, normal, semantic, instance and optical-flow passes.
//! * [`events`] emulates an event camera from high-rate luminance frames.
//! * [`dataset`] writes and reads sequence directories and trajectory
//!   interchange formats.
//! * [`evaluation`] computes absolute trajectory error.
//! * [`pipeline`] chains all of the above for a single job.

pub mod dataset;
pub mod evaluation;
pub mod events;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scene;
pub mod scene_change;
pub mod spline;
pub mod trajectory;

pub use geometry::{Aabb, Pose, Rgb, TimedPose};
