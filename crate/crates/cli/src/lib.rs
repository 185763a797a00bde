//! Command-line front end and local preview service for `roomgen`.
//!
//! * [`commands`] defines the `roomgen` subcommands and runs them.
//! * [`server`] is the HTTP preview service behind `roomgen serve`.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod commands;
pub mod server;

/// Failure tagged with the processing stage it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &str, message: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }

    /// Adapter for `map_err`.
    pub fn at<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> Self {
        move |e| Self::new(stage, e)
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

impl From<roomgen::pipeline::PipelineError> for StageError {
    fn from(e: roomgen::pipeline::PipelineError) -> Self {
        Self::new(&e.stage.to_string(), e.message)
    }
}
