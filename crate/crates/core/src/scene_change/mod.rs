//! Scene variation over time: planar push-and-settle rearrangement of
//! movable furniture and randomized lighting setups.

mod lighting;
mod rearrange;

use thiserror::Error;

pub use lighting::{randomize_lighting, temperature_to_rgb, LightOverride, LightingConfig, LightingReport};
pub use rearrange::{rearrange, simulate_push, slide_distance, RearrangeConfig, RearrangeReport};

#[derive(Debug, Error, PartialEq)]
pub enum SceneChangeError {
    #[error("scene has no movable objects")]
    NoMovables,
    #[error("scene has no lights")]
    NoLights,
    #[error("color temperature {0} K outside [1000, 12000]")]
    TemperatureOutOfRange(f64),
    #[error("object index {0} out of range")]
    NoSuchObject(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}
