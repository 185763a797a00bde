//! Plain-text trajectory files.
//!
//! ```text
//! # roomgen trajectory
//! # type 1
//! # v_mult 1.5
//! # ...
//! O <t> <tx> <ty> <tz> <rx> <ry> <rz>
//! C <t + exposure> <tx> <ty> <tz> <rx> <ry> <rz>
//! ```
//!
//! `O` and `C` records carry the shutter-open and shutter-close poses with
//! rotation vectors. Header lines hold the parameters.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{Keyframe, Trajectory, TrajectoryError, TrajectoryParams, TrajectoryType};
use crate::geometry::{pose_from_parts, rotation_vector, Pose};

const MAGIC: &str = "# roomgen trajectory";

fn pose_fields(p: &Pose) -> String {
    let t = p.translation.vector;
    let r = rotation_vector(&p.rotation);
    format!("{} {} {} {} {} {}", t.x, t.y, t.z, r.x, r.y, r.z)
}

pub fn trajectory_to_string(traj: &Trajectory) -> String {
    let p = &traj.params;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "# type {}", p.traj_type);
    let _ = writeln!(s, "# v_mult {}", p.v_mult);
    let _ = writeln!(s, "# w_mult {}", p.w_mult);
    let _ = writeln!(s, "# duration {}", p.duration);
    let _ = writeln!(s, "# frame_rate {}", p.frame_rate);
    if let Some(e) = p.exposure {
        let _ = writeln!(s, "# exposure {e}");
    }
    let _ = writeln!(s, "# seed {}", p.seed);
    let _ = writeln!(s, "# up {} {} {}", traj.up.x, traj.up.y, traj.up.z);
    let e = p.exposure();
    for k in &traj.frames {
        let _ = writeln!(s, "O {} {}", k.timestamp, pose_fields(&k.shutter_open_pose));
        let _ = writeln!(s, "C {} {}", k.timestamp + e, pose_fields(&k.shutter_close_pose));
    }
    s
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, TrajectoryError> {
    tok.parse::<f64>().map_err(|_| TrajectoryError::Parse {
        line,
        message: format!("'{tok}' is not a number"),
    })
}

fn parse_record(toks: &[&str], line: usize) -> Result<(f64, Pose), TrajectoryError> {
    if toks.len() != 8 {
        return Err(TrajectoryError::Parse {
            line,
            message: format!("expected 8 fields, found {}", toks.len()),
        });
    }
    let v: Vec<f64> = toks[1..].iter().map(|t| parse_f64(t, line)).collect::<Result<_, _>>()?;
    Ok((
        v[0],
        pose_from_parts(Vector3::new(v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6])),
    ))
}

pub fn trajectory_from_str(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut traj_type = None;
    let (mut v_mult, mut w_mult, mut duration, mut frame_rate, mut exposure) = (None, None, None, None, None);
    let mut seed = 0u64;
    let mut up = Vector3::z();
    let mut frames: Vec<Keyframe> = Vec::new();
    let mut pending_open: Option<(f64, Pose)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let Some((&key, vals)) = toks.split_first() else {
                continue;
            };
            let one = || -> Result<f64, TrajectoryError> {
                match vals {
                    [v] => parse_f64(v, line),
                    _ => Err(TrajectoryError::Parse {
                        line,
                        message: format!("'{key}' takes one value"),
                    }),
                }
            };
            match key {
                "type" => {
                    let v = one()?;
                    let t = TrajectoryType::try_from(v as u8)
                        .ok()
                        .filter(|_| v.fract() == 0.0)
                        .ok_or_else(|| TrajectoryError::Parse {
                            line,
                            message: format!("unknown trajectory type {v}"),
                        })?;
                    traj_type = Some(t);
                }
                "v_mult" => v_mult = Some(one()?),
                "w_mult" => w_mult = Some(one()?),
                "duration" => duration = Some(one()?),
                "frame_rate" => frame_rate = Some(one()?),
                "exposure" => exposure = Some(one()?),
                "seed" => {
                    seed = vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| TrajectoryError::Parse {
                        line,
                        message: "seed must be an unsigned integer".into(),
                    })?
                }
                "up" => {
                    let v: Vec<f64> = vals.iter().map(|t| parse_f64(t, line)).collect::<Result<_, _>>()?;
                    if v.len() != 3 {
                        return Err(TrajectoryError::Parse {
                            line,
                            message: "'up' takes three values".into(),
                        });
                    }
                    up = Vector3::new(v[0], v[1], v[2]);
                }
                _ => {}
            }
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "O" => {
                if pending_open.is_some() {
                    return Err(TrajectoryError::Parse {
                        line,
                        message: "open record without a matching close record".into(),
                    });
                }
                pending_open = Some(parse_record(&toks, line)?);
            }
            "C" => {
                let Some((t, open)) = pending_open.take() else {
                    return Err(TrajectoryError::Parse {
                        line,
                        message: "close record without an open record".into(),
                    });
                };
                let (tc, close) = parse_record(&toks, line)?;
                if tc < t {
                    return Err(TrajectoryError::Parse {
                        line,
                        message: "shutter closes before it opens".into(),
                    });
                }
                if frames.last().is_some_and(|k| k.timestamp >= t) {
                    return Err(TrajectoryError::Parse {
                        line,
                        message: "timestamps must increase".into(),
                    });
                }
                frames.push(Keyframe {
                    timestamp: t,
                    shutter_open_pose: open,
                    shutter_close_pose: close,
                });
            }
            other => {
                return Err(TrajectoryError::Parse {
                    line,
                    message: format!("unknown record '{other}'"),
                })
            }
        }
    }
    if pending_open.is_some() {
        return Err(TrajectoryError::Parse {
            line: text.lines().count(),
            message: "file ends after an open record".into(),
        });
    }
    let missing = |k: &str| TrajectoryError::Parse {
        line: 0,
        message: format!("header is missing '{k}'"),
    };
    let frame_rate = frame_rate.ok_or_else(|| missing("frame_rate"))?;
    let params = TrajectoryParams {
        traj_type: traj_type.ok_or_else(|| missing("type"))?,
        v_mult: v_mult.ok_or_else(|| missing("v_mult"))?,
        w_mult: w_mult.ok_or_else(|| missing("w_mult"))?,
        duration: duration.unwrap_or(frames.len() as f64 / frame_rate),
        frame_rate,
        exposure,
        seed,
    };
    Ok(Trajectory {
        params,
        up,
        frames,
        jitter: Vec::new(),
    })
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), TrajectoryError> {
    std::fs::write(path, trajectory_to_string(traj)).map_err(|e| TrajectoryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, TrajectoryError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrajectoryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    trajectory_from_str(&text)
}
