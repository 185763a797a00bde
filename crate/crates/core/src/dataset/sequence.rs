//! Sequence directories: frame assets, metadata files and the manifest.
//!
//! Layout:
//!
//! ```text
//! rgb/000000.png          8-bit sRGB
//! depth/000000.png        16-bit millimeters, 0 = invalid
//! depth_noisy/000000.png  optional, same encoding
//! normal/000000.png       16-bit RGB, (n + 1) / 2
//! label/000000.png        16-bit NYU40 class
//! instance/000000.png     16-bit instance id
//! flow/000000.flo         forward flow to the next frame
//! groundtruth_tum.txt
//! imu.csv
//! events.txt
//! manifest.json           written last
//! ```
//!
//! Frame files are recorded in `journal.txt` as they are written, so an
//! interrupted run can skip frames whose files still verify.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::formats::{export_trajectory_string, TrajectoryFormat};
use super::images::{
    decode_flo, decode_gray16, decode_rgb16, decode_rgb8, depth_to_mm, encode_flo, encode_gray16, encode_rgb16,
    encode_rgb8, normal_to_u16, rgb_to_srgb8,
};
use super::{io_error, DatasetError};
use crate::events::{events_to_text, Event};
use crate::geometry::TimedPose;
use crate::image::Image;
use crate::render::{unknown_flow, FrameBundle, Lens};
use crate::spline::{imu_to_csv, ImuSample};
use crate::trajectory::TrajectoryParams;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOURNAL_FILE: &str = "journal.txt";
pub const GROUNDTRUTH_FILE: &str = "groundtruth_tum.txt";
pub const IMU_FILE: &str = "imu.csv";
pub const EVENTS_FILE: &str = "events.txt";
const FRAME_DIRS: [&str; 6] = ["rgb", "depth", "normal", "label", "instance", "flow"];
const NOISY_DEPTH_DIR: &str = "depth_noisy";
/// Frame timestamps must match the ground truth to this many seconds.
const TIMESTAMP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    Original,
    Relit,
    Rearranged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub width: usize,
    pub height: usize,
    pub lens: Lens,
    /// Meters; set for stereo rigs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stereo_baseline: Option<f64>,
}

/// Everything in the manifest except the file inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub scene: String,
    pub configuration: Configuration,
    /// Absent when the trajectory came from a file.
    pub trajectory: Option<TrajectoryParams>,
    pub seed: u64,
    pub camera: CameraInfo,
    pub frame_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    #[serde(flatten)]
    pub info: SequenceInfo,
    pub frame_count: usize,
    pub noisy_depth: bool,
    /// Relative path to SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn frame_file_names(index: usize, noisy_depth: bool) -> Vec<String> {
    let mut names: Vec<String> = FRAME_DIRS
        .iter()
        .map(|d| {
            let ext = if *d == "flow" { "flo" } else { "png" };
            format!("{d}/{index:06}.{ext}")
        })
        .collect();
    if noisy_depth {
        names.push(format!("{NOISY_DEPTH_DIR}/{index:06}.png"));
    }
    names
}

/// Encoded files of one frame, keyed by relative path.
pub fn encode_frame(
    index: usize,
    frame: &FrameBundle,
    noisy_depth: Option<&Image<f32>>,
) -> Result<Vec<(String, Vec<u8>)>, DatasetError> {
    let names = frame_file_names(index, noisy_depth.is_some());
    let (w, h) = (frame.rgb.width, frame.rgb.height);
    let flow = frame.flow.clone().unwrap_or_else(|| unknown_flow(w, h));
    let mut out = vec![
        (names[0].clone(), encode_rgb8(&rgb_to_srgb8(&frame.rgb), &names[0])?),
        (names[1].clone(), encode_gray16(&frame.gt.depth.map(|&d| depth_to_mm(d)), &names[1])?),
        (names[2].clone(), encode_rgb16(&frame.gt.normals.map(normal_to_u16), &names[2])?),
        (names[3].clone(), encode_gray16(&frame.gt.semantic, &names[3])?),
        (names[4].clone(), encode_gray16(&frame.gt.instance, &names[4])?),
        (names[5].clone(), encode_flo(&flow)),
    ];
    if let Some(d) = noisy_depth {
        out.push((names[6].clone(), encode_gray16(&d.map(|&z| depth_to_mm(z)), &names[6])?));
    }
    Ok(out)
}

/// A frame as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredFrame {
    pub rgb: Image<[u8; 3]>,
    pub depth_mm: Image<u16>,
    pub depth_noisy_mm: Option<Image<u16>>,
    pub normal: Image<[u16; 3]>,
    pub label: Image<u16>,
    pub instance: Image<u16>,
    pub flow: Image<[f32; 2]>,
}

pub fn read_frame(dir: &Path, index: usize) -> Result<StoredFrame, DatasetError> {
    let names = frame_file_names(index, true);
    let read = |name: &String| -> Result<Vec<u8>, DatasetError> {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| io_error(&path, e))
    };
    let noisy_path = dir.join(&names[6]);
    let depth_noisy_mm = if noisy_path.exists() {
        Some(decode_gray16(&read(&names[6])?, &names[6])?)
    } else {
        None
    };
    Ok(StoredFrame {
        rgb: decode_rgb8(&read(&names[0])?, &names[0])?,
        depth_mm: decode_gray16(&read(&names[1])?, &names[1])?,
        normal: decode_rgb16(&read(&names[2])?, &names[2])?,
        label: decode_gray16(&read(&names[3])?, &names[3])?,
        instance: decode_gray16(&read(&names[4])?, &names[4])?,
        flow: decode_flo(&read(&names[5])?, &names[5])?,
        depth_noisy_mm,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// Incremental writer for one sequence directory.
#[derive(Debug)]
pub struct SequenceWriter {
    dir: PathBuf,
    /// Checksums of frame files written so far, by relative path.
    recorded: BTreeMap<String, String>,
}

impl SequenceWriter {
    /// Opens `dir` for writing, creating it if needed. Checksums from an
    /// existing journal or manifest are carried over and the manifest is
    /// removed, since the directory is incomplete until `finish`.
    pub fn open(dir: &Path) -> Result<Self, DatasetError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for d in FRAME_DIRS.iter().chain([&NOISY_DEPTH_DIR]) {
            let p = dir.join(d);
            fs::create_dir_all(&p).map_err(|e| io_error(&p, e))?;
        }
        let mut recorded = BTreeMap::new();
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            let m = read_manifest(dir)?;
            recorded.extend(m.files.into_iter().filter(|(k, _)| k.contains('/')));
        }
        let journal = dir.join(JOURNAL_FILE);
        if journal.exists() {
            let text = fs::read_to_string(&journal).map_err(|e| io_error(&journal, e))?;
            for l in text.lines() {
                if let Some((sum, name)) = l.split_once("  ") {
                    recorded.insert(name.to_string(), sum.to_string());
                }
            }
        }
        let writer = Self {
            dir: dir.to_path_buf(),
            recorded,
        };
        writer.rewrite_journal()?;
        if manifest_path.exists() {
            fs::remove_file(&manifest_path).map_err(|e| io_error(&manifest_path, e))?;
        }
        Ok(writer)
    }

    fn rewrite_journal(&self) -> Result<(), DatasetError> {
        let mut s = String::new();
        for (name, sum) in &self.recorded {
            let _ = writeln!(s, "{sum}  {name}");
        }
        write_atomic(&self.dir.join(JOURNAL_FILE), s.as_bytes())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// True when every file of frame `index` is recorded and its contents
    /// still match the recorded checksum.
    pub fn frame_is_complete(&self, index: usize, noisy_depth: bool) -> bool {
        frame_file_names(index, noisy_depth).iter().all(|name| {
            self.recorded
                .get(name)
                .is_some_and(|sum| fs::read(self.dir.join(name)).is_ok_and(|b| sha256_hex(&b) == *sum))
        })
    }

    pub fn write_frame(
        &mut self,
        index: usize,
        frame: &FrameBundle,
        noisy_depth: Option<&Image<f32>>,
    ) -> Result<(), DatasetError> {
        let files = encode_frame(index, frame, noisy_depth)?;
        let sums: Vec<(String, String)> = files
            .par_iter()
            .map(|(name, bytes)| {
                let path = self.dir.join(name);
                fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
                Ok((name.clone(), sha256_hex(bytes)))
            })
            .collect::<Result<_, DatasetError>>()?;
        let mut line = String::new();
        for (name, sum) in sums {
            let _ = writeln!(line, "{sum}  {name}");
            self.recorded.insert(name, sum);
        }
        let journal = self.dir.join(JOURNAL_FILE);
        let mut f = fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&journal)
            .map_err(|e| io_error(&journal, e))?;
        std::io::Write::write_all(&mut f, line.as_bytes()).map_err(|e| io_error(&journal, e))
    }

    /// Writes the metadata files and the manifest, then drops the journal.
    pub fn finish(
        self,
        info: SequenceInfo,
        frame_count: usize,
        noisy_depth: bool,
        groundtruth: &[TimedPose],
        imu: &[ImuSample],
        events: &[Event],
    ) -> Result<SequenceManifest, DatasetError> {
        let mut files = BTreeMap::new();
        for i in 0..frame_count {
            for name in frame_file_names(i, noisy_depth) {
                let sum = self
                    .recorded
                    .get(&name)
                    .ok_or_else(|| DatasetError::MissingFile { file: name.clone() })?;
                files.insert(name, sum.clone());
            }
        }
        let meta = [
            (GROUNDTRUTH_FILE, export_trajectory_string(groundtruth, TrajectoryFormat::Tum)),
            (IMU_FILE, imu_to_csv(imu)),
            (EVENTS_FILE, events_to_text(events)),
        ];
        for (name, text) in meta {
            write_atomic(&self.dir.join(name), text.as_bytes())?;
            files.insert(name.to_string(), sha256_hex(text.as_bytes()));
        }
        let manifest = SequenceManifest {
            info,
            frame_count,
            noisy_depth,
            files,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        write_atomic(&self.dir.join(MANIFEST_FILE), json.as_bytes())?;
        let journal = self.dir.join(JOURNAL_FILE);
        fs::remove_file(&journal).map_err(|e| io_error(&journal, e))?;
        Ok(manifest)
    }
}

/// Writes a complete sequence in one call.
pub fn write_sequence(
    dir: &Path,
    info: SequenceInfo,
    frames: &[FrameBundle],
    noisy_depth: Option<&[Image<f32>]>,
    groundtruth: &[TimedPose],
    imu: &[ImuSample],
    events: &[Event],
) -> Result<SequenceManifest, DatasetError> {
    if frames.len() != groundtruth.len() {
        return Err(DatasetError::FrameCount {
            frames: frames.len(),
            poses: groundtruth.len(),
        });
    }
    if let Some(n) = noisy_depth {
        if n.len() != frames.len() {
            return Err(DatasetError::FrameCount {
                frames: frames.len(),
                poses: n.len(),
            });
        }
    }
    for (index, (f, g)) in frames.iter().zip(groundtruth).enumerate() {
        if (f.timestamp - g.timestamp).abs() > TIMESTAMP_TOL {
            return Err(DatasetError::TimestampMismatch {
                index,
                frame: f.timestamp,
                expected: g.timestamp,
            });
        }
    }
    let mut w = SequenceWriter::open(dir)?;
    for (i, f) in frames.iter().enumerate() {
        w.write_frame(i, f, noisy_depth.map(|n| &n[i]))?;
    }
    w.finish(info, frames.len(), noisy_depth.is_some(), groundtruth, imu, events)
}

pub fn read_manifest(dir: &Path) -> Result<SequenceManifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(DatasetError::Incomplete(dir.display().to_string()));
    }
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))
}

/// Checks every inventoried file against its checksum.
pub fn verify_sequence(dir: &Path) -> Result<SequenceManifest, DatasetError> {
    let m = read_manifest(dir)?;
    let expected: usize = m.frame_count * frame_file_names(0, m.noisy_depth).len() + 3;
    if m.files.len() != expected {
        return Err(DatasetError::Manifest(format!(
            "inventory lists {} files, expected {expected}",
            m.files.len()
        )));
    }
    m.files.par_iter().try_for_each(|(name, sum)| {
        let path = dir.join(name);
        if !path.exists() {
            return Err(DatasetError::MissingFile { file: name.clone() });
        }
        let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
        if sha256_hex(&bytes) != *sum {
            return Err(DatasetError::Checksum { file: name.clone() });
        }
        Ok(())
    })?;
    Ok(m)
}
