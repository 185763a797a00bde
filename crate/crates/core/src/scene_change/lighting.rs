use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SceneChangeError;
use crate::geometry::Rgb;
use crate::rng;
use crate::scene::Scene;

const LIGHTING_STREAM: u64 = 0x4C49_4748;

/// Black-body color of a light, as an RGB triple normalized to a maximum of 1.
///
/// Uses Tanner Helland's piecewise fit to the Planckian locus in display
/// space, which is exactly neutral at 6600 K.
pub fn temperature_to_rgb(kelvin: f64) -> Result<Rgb, SceneChangeError> {
    if !(1000.0..=12000.0).contains(&kelvin) {
        return Err(SceneChangeError::TemperatureOutOfRange(kelvin));
    }
    let t = kelvin / 100.0;
    let r = if t <= 66.0 {
        255.0
    } else {
        329.698_727_446 * (t - 60.0).powf(-0.133_204_759_2)
    };
    let g = if t <= 66.0 {
        99.470_802_586_1 * t.ln() - 161.119_568_166_1
    } else {
        288.122_169_528_3 * (t - 60.0).powf(-0.075_514_849_2)
    };
    let b = if t >= 66.0 {
        255.0
    } else if t <= 19.0 {
        0.0
    } else {
        138.517_731_223_1 * (t - 10.0).ln() - 305.044_792_730_7
    };
    let c = Rgb::new(r, g, b).map(|v| v.clamp(0.0, 255.0) / 255.0);
    Ok(c / c.max())
}

/// Fixed values for one named light; unset fields are randomized.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LightOverride {
    pub name: String,
    #[serde(default)]
    pub color: Option<[f64; 3]>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub brightness_scale: Option<f64>,
    #[serde(default)]
    pub enabled: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingConfig {
    pub temperature_range: [f64; 2],
    pub brightness_range: [f64; 2],
    pub disable_probability: f64,
    #[serde(default)]
    pub overrides: Vec<LightOverride>,
    pub seed: u64,
}

impl Default for LightingConfig {
    fn default() -> Self {
        Self {
            temperature_range: [2500.0, 7500.0],
            brightness_range: [0.3, 2.0],
            disable_probability: 0.15,
            overrides: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LightingReport {
    /// Outcome of each light's disable draw, before any forced re-enable.
    pub drawn_disabled: Vec<bool>,
    /// Light switched back on because every light ended up disabled.
    pub forced_enable: Option<usize>,
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Resamples temperature, brightness scale and on/off state of every light.
/// Positions, directions and the light count are preserved.
pub fn randomize_lighting(scene: &Scene, config: &LightingConfig) -> Result<(Scene, LightingReport), SceneChangeError> {
    if scene.lights.is_empty() {
        return Err(SceneChangeError::NoLights);
    }
    for (name, r) in [("temperature_range", config.temperature_range), ("brightness_range", config.brightness_range)] {
        if !(r[0] <= r[1]) {
            return Err(SceneChangeError::Config(format!("{name} is empty")));
        }
    }
    if config.brightness_range[0] < 0.0 {
        return Err(SceneChangeError::Config("brightness scale must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&config.disable_probability) {
        return Err(SceneChangeError::Config("disable_probability outside [0, 1]".into()));
    }

    let mut out = scene.clone();
    let mut report = LightingReport::default();
    for (i, light) in out.lights.iter_mut().enumerate() {
        let mut rng = rng::stream(config.seed, &[LIGHTING_STREAM, i as u64]);
        let temperature = uniform(&mut rng, config.temperature_range);
        let scale = uniform(&mut rng, config.brightness_range);
        let disabled = rng.random::<f64>() < config.disable_probability;
        report.drawn_disabled.push(disabled);

        let ov = config.overrides.iter().find(|o| o.name == light.name);
        let temperature = ov.and_then(|o| o.temperature).unwrap_or(temperature);
        light.temperature = Some(temperature);
        light.color = match ov.and_then(|o| o.color) {
            Some(c) => Rgb::from(c),
            None => temperature_to_rgb(temperature)?,
        };
        light.brightness *= ov.and_then(|o| o.brightness_scale).unwrap_or(scale);
        light.enabled = ov.and_then(|o| o.enabled).unwrap_or(!disabled);
    }

    if out.lights.iter().all(|l| !l.enabled) {
        let mut rng = rng::stream(config.seed, &[LIGHTING_STREAM, u64::MAX]);
        let pick = rng.random_range(0..out.lights.len());
        out.lights[pick].enabled = true;
        report.forced_enable = Some(pick);
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::cube_scene;

    #[test]
    fn neutral_at_6600() {
        let c = temperature_to_rgb(6600.0).unwrap();
        for v in c.iter() {
            assert!((v - 1.0).abs() < 0.02, "{c:?}");
        }
    }

    #[test]
    fn warm_is_red() {
        let c = temperature_to_rgb(2000.0).unwrap();
        assert!(c.x > c.z);
        assert!(temperature_to_rgb(999.0).is_err());
        assert!(temperature_to_rgb(12001.0).is_err());
    }

    #[test]
    fn blue_red_ratio_is_monotone() {
        let mut prev = 0.0;
        for k in 0..=70 {
            let c = temperature_to_rgb(2000.0 + 100.0 * k as f64).unwrap();
            let ratio = c.z / c.x;
            assert!(ratio >= prev, "at {} K", 2000 + 100 * k);
            prev = ratio;
        }
    }

    #[test]
    fn fixed_config_only_recolors() {
        let scene = cube_scene();
        let cfg = LightingConfig {
            temperature_range: [4000.0, 4000.0],
            brightness_range: [1.0, 1.0],
            disable_probability: 0.0,
            ..Default::default()
        };
        let (out, report) = randomize_lighting(&scene, &cfg).unwrap();
        let mut expected = scene.clone();
        expected.lights[0].temperature = Some(4000.0);
        expected.lights[0].color = temperature_to_rgb(4000.0).unwrap();
        assert_eq!(out, expected);
        assert_eq!(report.forced_enable, None);
    }

    #[test]
    fn single_light_is_forced_back_on() {
        let scene = cube_scene();
        let cfg = LightingConfig {
            disable_probability: 1.0,
            ..Default::default()
        };
        let (out, report) = randomize_lighting(&scene, &cfg).unwrap();
        assert!(out.lights[0].enabled);
        assert_eq!(report.forced_enable, Some(0));
        assert_eq!(report.drawn_disabled, vec![true]);
    }
}
