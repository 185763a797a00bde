use proptest::prelude::*;

use roomgen::events::{
    emulate_events, read_events, write_events, Event, EventConfig, EventEmulator, EventError, IntensityFrame,
};
use roomgen::image::Image;

const FLOOR: f64 = 1e-3;

fn cfg(threshold: f64) -> EventConfig {
    EventConfig {
        threshold,
        ..EventConfig::default()
    }
}

/// Intensity whose log (after the floor) equals `l`.
fn intensity_for_log(l: f64) -> f32 {
    (l.exp() - FLOOR) as f32
}

fn log_of(i: f32) -> f64 {
    (f64::from(i) + FLOOR).ln()
}

fn frames_from(values: &[Vec<f32>], width: usize, rate: f64) -> Vec<IntensityFrame> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| IntensityFrame {
            timestamp: k as f64 / rate,
            intensity: Image::from_vec(width, v.len() / width, v.clone()),
        })
        .collect()
}

#[test]
fn constant_input_gives_no_events() {
    let values = vec![vec![0.3f32; 12]; 5];
    let ev = emulate_events(&frames_from(&values, 4, 1000.0), &cfg(0.2)).unwrap();
    assert!(ev.is_empty());
}

#[test]
fn ramp_of_3_7_thresholds_gives_three_events() {
    let c = 0.2;
    let l0 = 0.0;
    let l1 = l0 + 3.7 * c;
    let a = intensity_for_log(l0);
    let b = intensity_for_log(l1);
    let frames = frames_from(&[vec![a], vec![b]], 1, 1000.0);
    let ev = emulate_events(&frames, &cfg(c)).unwrap();
    assert_eq!(ev.len(), 3);
    // Crossing times of the linear interpolant between the realised logs.
    let (r0, r1) = (log_of(a), log_of(b));
    for (k, e) in ev.iter().enumerate() {
        let level = r0 + c * (k + 1) as f64;
        let t = (level - r0) / (r1 - r0) * 1e-3;
        assert_eq!(e.polarity, 1);
        assert_eq!((e.x, e.y), (0, 0));
        assert!((e.timestamp - t).abs() < 1e-12, "{} vs {t}", e.timestamp);
    }
}

#[test]
fn step_down_then_up_is_symmetric() {
    let c = 0.15;
    let hi = intensity_for_log(0.0);
    let lo = intensity_for_log(-1.0);
    let frames = frames_from(&[vec![hi], vec![lo], vec![hi]], 1, 500.0);
    let config = EventConfig {
        sim_rate: 500.0,
        ..cfg(c)
    };
    let mut emu = EventEmulator::new(&frames[0], &config).unwrap();
    let down = emu.push(&frames[1]).unwrap();
    let up = emu.push(&frames[2]).unwrap();
    assert!(!down.is_empty());
    assert_eq!(down.len(), up.len());
    assert!(down.iter().all(|e| e.polarity == -1) && up.iter().all(|e| e.polarity == 1));
    assert!((emu.reference()[0] - log_of(hi)).abs() < c);
}

#[test]
fn halving_threshold_on_a_ramp_follows_floor_rule() {
    let (l0, l1) = (-2.0, 1.3);
    let values: Vec<Vec<f32>> = (0..=50).map(|k| vec![intensity_for_log(l0 + (l1 - l0) * k as f64 / 50.0)]).collect();
    let frames = frames_from(&values, 1, 1000.0);
    let dl = log_of(values[50][0]) - log_of(values[0][0]);
    for c in [0.4, 0.2, 0.1, 0.05] {
        let n = emulate_events(&frames, &cfg(c)).unwrap().len();
        let half = emulate_events(&frames, &cfg(c / 2.0)).unwrap().len();
        assert_eq!(n as f64, (dl / c).floor());
        assert!(half >= 2 * n, "{half} < 2·{n}");
    }
}

#[test]
fn bad_input_is_rejected() {
    let f = frames_from(&[vec![0.5; 4], vec![0.5; 4]], 2, 1000.0);
    assert_eq!(emulate_events(&f[..1], &cfg(0.2)), Err(EventError::TooFewFrames(1)));
    let mut wrong = f.clone();
    wrong[1].intensity = Image::filled(4, 1, 0.5);
    assert!(matches!(emulate_events(&wrong, &cfg(0.2)), Err(EventError::FrameSize { index: 1, .. })));
    let mut late = f.clone();
    late[1].timestamp = 0.0015;
    assert!(matches!(emulate_events(&late, &cfg(0.2)), Err(EventError::NonUniform { index: 1, .. })));
    assert!(matches!(emulate_events(&f, &cfg(0.0)), Err(EventError::Config(_))));
    assert!(cfg(0.2).validate_for_frame_rate(25.0).is_ok());
    assert!(cfg(0.2).validate_for_frame_rate(1000.0).is_err());
}

#[test]
fn rgb_frames_use_rec709_luminance() {
    let rgb = Image::from_vec(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let f = IntensityFrame::from_rgb(0.5, &rgb);
    assert!((f.intensity.data[0] - 0.2126).abs() < 1e-7);
    assert!((f.intensity.data[1] - 0.0722).abs() < 1e-7);
}

#[test]
fn file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.txt");
    let ev = vec![
        Event { x: 5, y: 0, timestamp: 0.000_123_456, polarity: 1 },
        Event { x: 1, y: 7, timestamp: 0.5, polarity: -1 },
    ];
    write_events(&ev, &path).unwrap();
    let back = read_events(&path).unwrap();
    assert_eq!(back, ev);
    write_events(&back, &dir.path().join("again.txt")).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("again.txt")).unwrap());
}

fn random_sequence() -> impl Strategy<Value = (usize, Vec<Vec<f32>>, f64)> {
    (1usize..5, 1usize..4, 2usize..12, 0.05f64..0.5).prop_flat_map(|(w, h, n, c)| {
        (
            Just(w),
            prop::collection::vec(prop::collection::vec(0.0f32..4.0, w * h), n),
            Just(c),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn events_reconstruct_log_intensity((w, values, c) in random_sequence()) {
        let frames = frames_from(&values, w, 1000.0);
        let config = cfg(c);
        let mut emu = EventEmulator::new(&frames[0], &config).unwrap();
        let mut integrated: Vec<f64> = frames[0].intensity.data.iter().map(|&i| log_of(i)).collect();
        for (k, f) in frames.iter().enumerate().skip(1) {
            let ev = emu.push(f).unwrap();
            let (t0, t1) = (frames[k - 1].timestamp, f.timestamp);
            for e in &ev {
                prop_assert!(e.timestamp >= t0 && e.timestamp <= t1);
                integrated[e.y as usize * w + e.x as usize] += c * f64::from(e.polarity);
            }
            for (i, &v) in f.intensity.data.iter().enumerate() {
                prop_assert!((integrated[i] - log_of(v)).abs() < c + 1e-12);
            }
        }
    }

    #[test]
    fn stream_is_sorted_and_deterministic((w, values, c) in random_sequence()) {
        let frames = frames_from(&values, w, 1000.0);
        let a = emulate_events(&frames, &cfg(c)).unwrap();
        let b = emulate_events(&frames, &cfg(c)).unwrap();
        prop_assert_eq!(&a, &b);
        for pair in a.windows(2) {
            let key = |e: &Event| (e.timestamp, e.y, e.x);
            prop_assert!(key(&pair[0]) <= key(&pair[1]));
        }
    }
}
