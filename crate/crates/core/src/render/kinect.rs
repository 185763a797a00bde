use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::derive_seed;

const KINECT_STREAM: u64 = 0x4B49_4E45;

/// Structured-light depth sensor model: disparity quantization plus axial
/// Gaussian noise growing quadratically with distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinectNoise {
    pub baseline: f64,
    pub focal_px: f64,
    /// Disparity quantization step (pixels).
    pub disparity_step: f64,
    pub min_depth: f64,
    pub max_depth: f64,
    /// σ(z) = sigma_base + sigma_quadratic·(z − sigma_offset)².
    pub sigma_base: f64,
    pub sigma_quadratic: f64,
    pub sigma_offset: f64,
}

impl Default for KinectNoise {
    fn default() -> Self {
        Self {
            baseline: 0.075,
            focal_px: 580.0,
            disparity_step: 0.125,
            min_depth: 0.4,
            max_depth: 8.0,
            sigma_base: 0.0012,
            sigma_quadratic: 0.0019,
            sigma_offset: 0.4,
        }
    }
}

impl KinectNoise {
    pub fn sigma(&self, z: f64) -> f64 {
        self.sigma_base + self.sigma_quadratic * (z - self.sigma_offset).powi(2)
    }

    /// Disparity-quantized depth without the random component.
    pub fn quantize(&self, z: f64) -> f64 {
        let bf = self.baseline * self.focal_px;
        let d = bf / z;
        let dq = (d / self.disparity_step).round() * self.disparity_step;
        bf / dq
    }
}

/// Noisy copy of a depth image (meters, 0 = invalid). Depths outside the
/// sensor window become 0.
pub fn apply_kinect_noise(depth: &Image<f32>, model: &KinectNoise, seed: u64) -> Image<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[KINECT_STREAM]));
    depth.map(|&z| {
        let z = z as f64;
        if !(z >= model.min_depth && z <= model.max_depth) {
            return 0.0;
        }
        let n: f64 = StandardNormal.sample(&mut rng);
        let noisy = model.quantize(z) + model.sigma(z) * n;
        if noisy > 0.0 {
            noisy as f32
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_and_out_of_range() {
        let img = Image::from_vec(3, 1, vec![0.0, 10.0, 0.3]);
        let out = apply_kinect_noise(&img, &KinectNoise::default(), 1);
        assert_eq!(out.data, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_std_at_two_meters() {
        let model = KinectNoise::default();
        let img = Image::filled(100, 100, 2.0f32);
        let out = apply_kinect_noise(&img, &model, 7);
        let n = out.data.len() as f64;
        let mean = out.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = out.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 0.0012 + 0.0019 * 1.6f64.powi(2);
        assert!((expected - 0.00606).abs() < 1e-5);
        assert!((var.sqrt() - expected).abs() < 0.1 * expected, "{}", var.sqrt());
    }

    #[test]
    fn quantization_steps_are_eighth_pixel() {
        let m = KinectNoise::default();
        let bf = 0.075 * 580.0;
        for z in [0.5, 1.3, 3.7, 7.9] {
            let d = bf / m.quantize(z);
            assert!((d * 8.0 - (d * 8.0).round()).abs() < 1e-9);
            assert!((bf / z - d).abs() <= 1.0 / 16.0 + 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let img = Image::filled(8, 8, 3.0f32);
        let m = KinectNoise::default();
        assert_eq!(apply_kinect_noise(&img, &m, 5), apply_kinect_noise(&img, &m, 5));
        assert_ne!(apply_kinect_noise(&img, &m, 5), apply_kinect_noise(&img, &m, 6));
    }
}
