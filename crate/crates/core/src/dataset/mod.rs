//! Sequence directories, trajectory interchange formats and dataset splits.

mod formats;
mod images;
mod sequence;
mod splits;

use std::path::Path;

use thiserror::Error;

pub use formats::{
    export_trajectory, export_trajectory_string, import_trajectory, import_trajectory_str, TrajectoryFormat,
    QUATERNION_NORM_TOL,
};
pub use images::{
    decode_flo, decode_gray16, decode_rgb16, decode_rgb8, depth_to_mm, encode_flo, encode_gray16, encode_rgb16,
    encode_rgb8, mm_to_depth, normal_to_u16, rgb_to_srgb8,
};
pub use sequence::{
    encode_frame, frame_file_names, read_frame, read_manifest, sha256_hex, verify_sequence, write_sequence,
    CameraInfo, Configuration, SequenceInfo, SequenceManifest, SequenceWriter, StoredFrame, EVENTS_FILE,
    GROUNDTRUTH_FILE, IMU_FILE, JOURNAL_FILE, MANIFEST_FILE,
};
pub use splits::{assign_splits, Split, SplitAssignment, TRAIN_SHARE, VAL_SHARE};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: quaternion norm {norm} is not within tolerance of 1")]
    Quaternion { line: usize, norm: f64 },
    #[error("line {line}: timestamp does not increase")]
    NonMonotone { line: usize },
    #[error("unsupported trajectory format '{0}'")]
    UnsupportedFormat(String),
    #[error("frame {index} has timestamp {frame}, ground truth has {expected}")]
    TimestampMismatch { index: usize, frame: f64, expected: f64 },
    #[error("{frames} frames but {poses} ground-truth entries")]
    FrameCount { frames: usize, poses: usize },
    #[error("checksum mismatch for {file}")]
    Checksum { file: String },
    #[error("missing file {file}")]
    MissingFile { file: String },
    #[error("image {file}: {message}")]
    Image { file: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0} has no manifest; the sequence is incomplete")]
    Incomplete(String),
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
