//! TUM and EuRoC trajectory text formats.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{io_error, DatasetError};
use crate::geometry::{Pose, TimedPose};

/// Largest accepted deviation of an imported quaternion norm from 1.
pub const QUATERNION_NORM_TOL: f64 = 1e-2;
/// Quaternions closer to unit norm than this are kept bit-for-bit.
const UNIT_EPS: f64 = 1e-12;

const TUM_HEADER: &str = "# timestamp tx ty tz qx qy qz qw";
const EUROC_HEADER: &str =
    "#timestamp [ns],p_RS_R_x [m],p_RS_R_y [m],p_RS_R_z [m],q_RS_w [],q_RS_x [],q_RS_y [],q_RS_z []";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryFormat {
    /// `timestamp tx ty tz qx qy qz qw`, seconds.
    Tum,
    /// `timestamp_ns,px,py,pz,qw,qx,qy,qz`.
    Euroc,
}

impl FromStr for TrajectoryFormat {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, DatasetError> {
        match s.to_ascii_lowercase().as_str() {
            "tum" => Ok(Self::Tum),
            "euroc" => Ok(Self::Euroc),
            _ => Err(DatasetError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl fmt::Display for TrajectoryFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tum => "tum",
            Self::Euroc => "euroc",
        })
    }
}

/// Unit quaternions with each one's sign chosen so that its dot product
/// with the previous one is non-negative; the first has `w >= 0`.
fn continuous_quaternions(poses: &[TimedPose]) -> Vec<Quaternion<f64>> {
    let mut out: Vec<Quaternion<f64>> = Vec::with_capacity(poses.len());
    for p in poses {
        let q = *p.pose.rotation.quaternion();
        let flip = match out.last() {
            Some(prev) => prev.dot(&q) < 0.0,
            None => q.w < 0.0,
        };
        out.push(if flip { -q } else { q });
    }
    out
}

pub fn export_trajectory_string(poses: &[TimedPose], format: TrajectoryFormat) -> String {
    let mut s = String::with_capacity(poses.len() * 96 + 96);
    let quats = continuous_quaternions(poses);
    match format {
        TrajectoryFormat::Tum => {
            let _ = writeln!(s, "{TUM_HEADER}");
            for (p, q) in poses.iter().zip(&quats) {
                let t = p.pose.translation.vector;
                let _ = writeln!(
                    s,
                    "{:.6} {} {} {} {} {} {} {}",
                    p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
                );
            }
        }
        TrajectoryFormat::Euroc => {
            let _ = writeln!(s, "{EUROC_HEADER}");
            for (p, q) in poses.iter().zip(&quats) {
                let t = p.pose.translation.vector;
                let ns = (p.timestamp * 1e9).round() as i64;
                let _ = writeln!(s, "{ns},{},{},{},{},{},{},{}", t.x, t.y, t.z, q.w, q.i, q.j, q.k);
            }
        }
    }
    s
}

pub fn import_trajectory_str(text: &str, format: TrajectoryFormat) -> Result<Vec<TimedPose>, DatasetError> {
    let mut out: Vec<TimedPose> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            TrajectoryFormat::Tum => l.split_whitespace().collect(),
            TrajectoryFormat::Euroc => l.split(',').map(str::trim).collect(),
        };
        let parse_err = |message: String| DatasetError::Parse { line, message };
        let enough = match format {
            TrajectoryFormat::Tum => fields.len() == 8,
            // EuRoC ground truth may carry velocity and bias columns after the pose.
            TrajectoryFormat::Euroc => fields.len() >= 8,
        };
        if !enough {
            return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("'{}' is not a finite number", fields[k])))
        };
        let (timestamp, q) = match format {
            TrajectoryFormat::Tum => (num(0)?, Quaternion::new(num(7)?, num(4)?, num(5)?, num(6)?)),
            TrajectoryFormat::Euroc => {
                let ns: i64 = fields[0]
                    .parse()
                    .map_err(|_| parse_err(format!("'{}' is not an integer timestamp", fields[0])))?;
                (ns as f64 / 1e9, Quaternion::new(num(4)?, num(5)?, num(6)?, num(7)?))
            }
        };
        let norm = q.norm();
        if !((norm - 1.0).abs() <= QUATERNION_NORM_TOL) {
            return Err(DatasetError::Quaternion { line, norm });
        }
        let rotation = if (norm - 1.0).abs() <= UNIT_EPS {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        if out.last().is_some_and(|p| timestamp <= p.timestamp) {
            return Err(DatasetError::NonMonotone { line });
        }
        let translation = Translation3::new(num(1)?, num(2)?, num(3)?);
        out.push(TimedPose::new(timestamp, Pose::from_parts(translation, rotation)));
    }
    Ok(out)
}

pub fn export_trajectory(poses: &[TimedPose], format: TrajectoryFormat, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, export_trajectory_string(poses, format)).map_err(|e| io_error(path, e))
}

pub fn import_trajectory(path: &Path, format: TrajectoryFormat) -> Result<Vec<TimedPose>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    import_trajectory_str(&text, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_tum_line() {
        let s = export_trajectory_string(&[TimedPose::new(0.0, Pose::identity())], TrajectoryFormat::Tum);
        assert_eq!(s.lines().nth(1), Some("0.000000 0 0 0 0 0 0 1"));
    }

    #[test]
    fn format_tags_parse() {
        assert_eq!("TUM".parse::<TrajectoryFormat>().unwrap(), TrajectoryFormat::Tum);
        assert_eq!("euroc".parse::<TrajectoryFormat>().unwrap(), TrajectoryFormat::Euroc);
        assert!(matches!("kitti".parse::<TrajectoryFormat>(), Err(DatasetError::UnsupportedFormat(_))));
    }
}
