//! Event-camera emulation from high-rate intensity frames.
//!
//! Each pixel keeps a reference log intensity. Between two frames the log
//! intensity is interpolated linearly; every threshold level it crosses
//! emits one event at the interpolated crossing time.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{luminance, Image};

/// Relative tolerance on frame spacing versus `1/sim_rate`.
const SPACING_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("invalid event configuration: {0}")]
    Config(String),
    #[error("event emulation needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    FrameSize {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("frame {index} is {dt} s after its predecessor, expected {expected} s")]
    NonUniform { index: usize, dt: f64, expected: f64 },
    #[error("event file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    /// Log-intensity contrast threshold C.
    pub threshold: f64,
    /// Rate of the underlying intensity renders (Hz).
    pub sim_rate: f64,
    pub width: usize,
    pub height: usize,
    /// Added to the intensity before taking the log.
    pub intensity_floor: f64,
    /// Minimum time between two emitted events at one pixel (s); 0 disables.
    /// Suppressed crossings still advance the reference level.
    pub refractory_period: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            sim_rate: 1000.0,
            width: 320,
            height: 240,
            intensity_floor: 1e-3,
            refractory_period: 0.0,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<(), EventError> {
        let bad = |m: String| Err(EventError::Config(m));
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be > 0, got {}", self.threshold));
        }
        if !(self.sim_rate > 0.0 && self.sim_rate.is_finite()) {
            return bad(format!("sim_rate must be > 0, got {}", self.sim_rate));
        }
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be >= 1".into());
        }
        if !(self.intensity_floor > 0.0 && self.intensity_floor.is_finite()) {
            return bad(format!("intensity_floor must be > 0, got {}", self.intensity_floor));
        }
        if !(self.refractory_period >= 0.0 && self.refractory_period.is_finite()) {
            return bad(format!("refractory_period must be >= 0, got {}", self.refractory_period));
        }
        Ok(())
    }

    /// The simulation must sample faster than the RGB stream it accompanies.
    pub fn validate_for_frame_rate(&self, frame_rate: f64) -> Result<(), EventError> {
        self.validate()?;
        if self.sim_rate <= frame_rate {
            return Err(EventError::Config(format!(
                "sim_rate {} Hz must exceed the frame rate {frame_rate} Hz",
                self.sim_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// Seconds.
    pub timestamp: f64,
    /// +1 for brightening, −1 for darkening.
    pub polarity: i8,
}

/// Timestamp first, then row, then column.
fn event_order(a: &Event, b: &Event) -> Ordering {
    a.timestamp
        .total_cmp(&b.timestamp)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// Linear intensity frame at a point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityFrame {
    pub timestamp: f64,
    pub intensity: Image<f32>,
}

impl IntensityFrame {
    /// Rec. 709 luminance of a linear RGB render.
    pub fn from_rgb(timestamp: f64, rgb: &Image<[f32; 3]>) -> Self {
        Self {
            timestamp,
            intensity: rgb.map(luminance),
        }
    }
}

/// Streaming emulator: feed frames in time order with [`EventEmulator::push`].
#[derive(Clone, Debug)]
pub struct EventEmulator {
    config: EventConfig,
    width: usize,
    height: usize,
    frames_seen: usize,
    last_time: f64,
    last_log: Vec<f64>,
    reference: Vec<f64>,
    last_event: Vec<f64>,
}

impl EventEmulator {
    /// Starts every reference level at the first frame's log intensity.
    pub fn new(first: &IntensityFrame, config: &EventConfig) -> Result<Self, EventError> {
        config.validate()?;
        let log: Vec<f64> = first
            .intensity
            .data
            .iter()
            .map(|&i| log_intensity(i, config.intensity_floor))
            .collect();
        Ok(Self {
            config: config.clone(),
            width: first.intensity.width,
            height: first.intensity.height,
            frames_seen: 1,
            last_time: first.timestamp,
            reference: log.clone(),
            last_log: log,
            last_event: vec![f64::NEG_INFINITY; first.intensity.data.len()],
        })
    }

    /// Per-pixel reference log intensity, row-major.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Events between the previous frame and `frame`, time-ordered.
    pub fn push(&mut self, frame: &IntensityFrame) -> Result<Vec<Event>, EventError> {
        let index = self.frames_seen;
        let expected = (self.width, self.height);
        let got = (frame.intensity.width, frame.intensity.height);
        if got != expected {
            return Err(EventError::FrameSize { index, got, expected });
        }
        let period = 1.0 / self.config.sim_rate;
        let dt = frame.timestamp - self.last_time;
        if !((dt - period).abs() <= SPACING_TOL * period) {
            return Err(EventError::NonUniform {
                index,
                dt,
                expected: period,
            });
        }
        let (t0, w) = (self.last_time, self.width);
        let c = self.config.threshold;
        let floor = self.config.intensity_floor;
        let refractory = self.config.refractory_period;
        let rows: Vec<Vec<Event>> = self
            .reference
            .par_chunks_mut(w)
            .zip(self.last_log.par_chunks_mut(w))
            .zip(self.last_event.par_chunks_mut(w))
            .zip(frame.intensity.data.par_chunks(w))
            .enumerate()
            .map(|(y, (((reference, last_log), last_event), intensity))| {
                let mut out = Vec::new();
                for x in 0..w {
                    let l0 = last_log[x];
                    let l1 = log_intensity(intensity[x], floor);
                    let r = reference[x];
                    let (count, polarity) = if l1 >= r {
                        (((l1 - r) / c).floor(), 1.0)
                    } else {
                        (((r - l1) / c).floor(), -1.0)
                    };
                    for k in 1..=count as u64 {
                        let level = r + polarity * c * k as f64;
                        let s = ((level - l0) / (l1 - l0)).clamp(0.0, 1.0);
                        let t = t0 + s * dt;
                        if t - last_event[x] >= refractory {
                            last_event[x] = t;
                            out.push(Event {
                                x: x as u32,
                                y: y as u32,
                                timestamp: t,
                                polarity: polarity as i8,
                            });
                        }
                    }
                    reference[x] = r + polarity * c * count;
                    last_log[x] = l1;
                }
                out
            })
            .collect();
        let mut events: Vec<Event> = rows.into_iter().flatten().collect();
        events.sort_by(event_order);
        self.frames_seen += 1;
        self.last_time = frame.timestamp;
        Ok(events)
    }
}

fn log_intensity(i: f32, floor: f64) -> f64 {
    (f64::from(i).max(0.0) + floor).ln()
}

/// Emulates the event stream for a whole frame sequence.
pub fn emulate_events(frames: &[IntensityFrame], config: &EventConfig) -> Result<Vec<Event>, EventError> {
    if frames.len() < 2 {
        return Err(EventError::TooFewFrames(frames.len()));
    }
    let mut emulator = EventEmulator::new(&frames[0], config)?;
    let mut events = Vec::new();
    for f in &frames[1..] {
        events.extend(emulator.push(f)?);
    }
    Ok(events)
}

/// One line per event: `timestamp_ns x y polarity`.
pub fn events_to_text(events: &[Event]) -> String {
    let mut s = String::with_capacity(events.len() * 24);
    for e in events {
        let ns = (e.timestamp * 1e9).round() as i64;
        let _ = writeln!(s, "{ns} {} {} {}", e.x, e.y, e.polarity);
    }
    s
}

pub fn events_from_text(text: &str) -> Result<Vec<Event>, EventError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        let err = |message: String| EventError::Parse { line, message };
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let ns: i64 = f[0].parse().map_err(|_| err(format!("bad timestamp '{}'", f[0])))?;
        let x: u32 = f[1].parse().map_err(|_| err(format!("bad x '{}'", f[1])))?;
        let y: u32 = f[2].parse().map_err(|_| err(format!("bad y '{}'", f[2])))?;
        let polarity: i8 = match f[3] {
            "1" => 1,
            "-1" => -1,
            p => return Err(err(format!("polarity must be 1 or -1, got '{p}'"))),
        };
        out.push(Event {
            x,
            y,
            timestamp: ns as f64 / 1e9,
            polarity,
        });
    }
    Ok(out)
}

pub fn write_events(events: &[Event], path: &Path) -> Result<(), EventError> {
    std::fs::write(path, events_to_text(events)).map_err(|e| EventError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, EventError> {
    let text = std::fs::read_to_string(path).map_err(|e| EventError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    events_from_text(&text)
}
