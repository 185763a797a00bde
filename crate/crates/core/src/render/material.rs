//! Four-lobe BSDF sampling and evaluation.

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use nalgebra::Vector3;
use rand::Rng;

use crate::geometry::{orthonormal_basis, Rgb};
use crate::scene::Material;

const MIN_ALPHA: f64 = 1e-4;

/// Local surface description at a hit, with both normals flipped to the
/// side the ray arrived from.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint<'a> {
    pub material: &'a Material,
    /// Lambertian albedo after texture modulation.
    pub albedo: Rgb,
    pub shading_normal: Vector3<f64>,
    pub geometric_normal: Vector3<f64>,
    /// The ray hit the side the geometric normal points to.
    pub front_face: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BsdfSample {
    Absorbed,
    Scatter {
        wi: Vector3<f64>,
        /// `f·cos/pdf` of the chosen lobe.
        weight: Rgb,
        delta: bool,
    },
}

fn to_world(n: &Vector3<f64>, local: Vector3<f64>) -> Vector3<f64> {
    let (t, b) = orthonormal_basis(n);
    t * local.x + b * local.y + n * local.z
}

fn reflect(wo: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    n * (2.0 * wo.dot(n)) - wo
}

fn schlick(f0: &Rgb, cos: f64) -> Rgb {
    let m = (1.0 - cos).clamp(0.0, 1.0).powi(5);
    f0 + (Rgb::repeat(1.0) - f0) * m
}

fn ggx_d(alpha: f64, cos_h: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

fn smith_g1(alpha: f64, cos: f64) -> f64 {
    let a2 = alpha * alpha;
    2.0 * cos / (cos + (a2 + (1.0 - a2) * cos * cos).sqrt())
}

/// Unpolarized Fresnel reflectance of a smooth dielectric boundary.
pub fn fresnel_dielectric(cos_i: f64, eta: f64) -> f64 {
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t >= 1.0 {
        return 1.0;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let rs = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    let rp = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    0.5 * (rs * rs + rp * rp)
}

impl SurfacePoint<'_> {
    fn alpha(&self) -> f64 {
        (self.material.roughness * self.material.roughness).max(MIN_ALPHA)
    }

    /// Non-delta part of the BSDF (lambertian and microfacet lobes), without the cosine.
    pub fn eval(&self, wo: &Vector3<f64>, wi: &Vector3<f64>) -> Rgb {
        let n = &self.shading_normal;
        let (cos_o, cos_i) = (n.dot(wo), n.dot(wi));
        if cos_o <= 0.0 || cos_i <= 0.0 || self.geometric_normal.dot(wi) <= 0.0 {
            return Rgb::zeros();
        }
        let w = &self.material.lobe_weights;
        let mut f = Rgb::zeros();
        if w[0] > 0.0 {
            f += self.albedo * (w[0] * FRAC_1_PI);
        }
        if w[1] > 0.0 {
            let h = (wo + wi).normalize();
            let alpha = self.alpha();
            let d = ggx_d(alpha, n.dot(&h).max(0.0));
            let g = smith_g1(alpha, cos_o) * smith_g1(alpha, cos_i);
            let fr = schlick(&self.material.microfacet_tint, wo.dot(&h).max(0.0));
            f += fr * (w[1] * d * g / (4.0 * cos_o * cos_i));
        }
        f
    }

    pub fn has_smooth_lobes(&self) -> bool {
        let w = &self.material.lobe_weights;
        w[0] > 0.0 || w[1] > 0.0
    }

    /// Picks a lobe with probability equal to its weight; the leftover weight absorbs.
    pub fn sample(&self, wo: &Vector3<f64>, rng: &mut impl Rng) -> BsdfSample {
        let w = self.material.lobe_weights;
        let pick: f64 = rng.random();
        let u: [f64; 2] = [rng.random(), rng.random()];
        let n = self.shading_normal;
        let mut acc = 0.0;
        for (lobe, &wk) in w.iter().enumerate() {
            acc += wk;
            if pick >= acc || wk <= 0.0 {
                continue;
            }
            return match lobe {
                0 => self.sample_lambert(&n, u),
                1 => self.sample_microfacet(wo, &n, u),
                2 => self.sample_dielectric(wo, &n, rng.random()),
                _ => BsdfSample::Scatter {
                    wi: -wo,
                    weight: self.material.transmission,
                    delta: true,
                },
            };
        }
        BsdfSample::Absorbed
    }

    fn sample_lambert(&self, n: &Vector3<f64>, [u1, u2]: [f64; 2]) -> BsdfSample {
        let r = u1.sqrt();
        let phi = TAU * u2;
        let local = Vector3::new(r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt());
        let wi = to_world(n, local);
        if wi.dot(&self.geometric_normal) <= 0.0 {
            return BsdfSample::Absorbed;
        }
        BsdfSample::Scatter {
            wi,
            weight: self.albedo,
            delta: false,
        }
    }

    fn sample_microfacet(&self, wo: &Vector3<f64>, n: &Vector3<f64>, [u1, u2]: [f64; 2]) -> BsdfSample {
        let alpha = self.alpha();
        let a2 = alpha * alpha;
        let cos2 = ((1.0 - u1) / (u1 * (a2 - 1.0) + 1.0)).clamp(0.0, 1.0);
        let (cos_t, sin_t) = (cos2.sqrt(), (1.0 - cos2).sqrt());
        let phi = TAU * u2;
        let h = to_world(n, Vector3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t));
        let wi = reflect(wo, &h);
        let (cos_o, cos_i, cos_oh) = (n.dot(wo), n.dot(&wi), wo.dot(&h));
        if cos_o <= 0.0 || cos_i <= 0.0 || cos_oh <= 0.0 || wi.dot(&self.geometric_normal) <= 0.0 {
            return BsdfSample::Absorbed;
        }
        let g = smith_g1(alpha, cos_o) * smith_g1(alpha, cos_i);
        let weight = schlick(&self.material.microfacet_tint, cos_oh) * (g * cos_oh / (cos_o * cos_t));
        BsdfSample::Scatter {
            wi,
            weight,
            delta: false,
        }
    }

    fn sample_dielectric(&self, wo: &Vector3<f64>, n: &Vector3<f64>, u: f64) -> BsdfSample {
        let eta = if self.front_face {
            1.0 / self.material.ior
        } else {
            self.material.ior
        };
        let cos_i = n.dot(wo).clamp(-1.0, 1.0);
        let fr = fresnel_dielectric(cos_i.abs(), eta);
        let wi = if u < fr {
            reflect(wo, n)
        } else {
            let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
            let cos_t = (1.0 - sin2_t).max(0.0).sqrt();
            (-wo * eta + n * (eta * cos_i - cos_t)).normalize()
        };
        BsdfSample::Scatter {
            wi,
            weight: Rgb::repeat(1.0),
            delta: true,
        }
    }
}
