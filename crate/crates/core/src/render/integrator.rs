//! Unidirectional path tracing with next-event estimation toward the
//! explicit scene lights.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use super::bvh::{Bvh, Hit, Ray};
use super::material::{BsdfSample, SurfacePoint};
use crate::geometry::{orthonormal_basis, Rgb};
use crate::scene::{Light, LightKind, Scene};

/// Paths are randomly terminated from this bounce on.
pub const ROULETTE_START: u32 = 3;
const RAY_EPS: f64 = 1e-6;

/// Surface attributes at a ray hit.
#[derive(Clone, Copy, Debug)]
pub struct HitInfo {
    pub point: Point3<f64>,
    /// Interpolated shading normal, facing the incoming ray.
    pub shading_normal: Vector3<f64>,
    /// Geometric normal, facing the incoming ray.
    pub geometric_normal: Vector3<f64>,
    pub front_face: bool,
    pub uv: Option<[f64; 2]>,
}

pub fn hit_info(bvh: &Bvh, ray: &Ray, hit: &Hit) -> HitInfo {
    let sh = bvh.shading(hit.object, hit.triangle);
    let w0 = 1.0 - hit.u - hit.v;
    let mut ns = (sh.normals[0] * w0 + sh.normals[1] * hit.u + sh.normals[2] * hit.v)
        .try_normalize(0.0)
        .unwrap_or(sh.geometric_normal);
    let mut ng = sh.geometric_normal;
    let front_face = ng.dot(&ray.dir) < 0.0;
    if !front_face {
        ng = -ng;
    }
    if ns.dot(&ng) < 0.0 {
        ns = -ns;
    }
    let uv = sh.uv.map(|t| {
        [
            t[0][0] * w0 + t[1][0] * hit.u + t[2][0] * hit.v,
            t[0][1] * w0 + t[1][1] * hit.u + t[2][1] * hit.v,
        ]
    });
    HitInfo {
        point: ray.at(hit.t),
        shading_normal: ns,
        geometric_normal: ng,
        front_face,
        uv,
    }
}

/// Lambertian albedo at a hit including texture modulation.
pub fn surface_albedo(scene: &Scene, hit: &Hit, info: &HitInfo) -> Rgb {
    let m = &scene.materials[scene.objects[hit.object as usize].material];
    match (&m.texture, info.uv) {
        (Some(tex), Some(uv)) => m.albedo.component_mul(&tex.sample(uv)),
        _ => m.albedo,
    }
}

fn offset_origin(p: &Point3<f64>, ng: &Vector3<f64>, dir: &Vector3<f64>) -> Point3<f64> {
    let scale = RAY_EPS * (1.0 + p.coords.amax());
    if ng.dot(dir) >= 0.0 {
        p + ng * scale
    } else {
        p - ng * scale
    }
}

fn visible(bvh: &Bvh, from: &Point3<f64>, ng: &Vector3<f64>, dir: &Vector3<f64>, dist: f64) -> bool {
    let origin = offset_origin(from, ng, dir);
    let mut ray = Ray::new(origin, *dir);
    ray.t_max = dist * (1.0 - 1e-9) - RAY_EPS;
    !bvh.occluded(&ray)
}

/// One-sample estimate of the light arriving at `point` from `light`,
/// already multiplied by the BSDF and the cosine term.
fn sample_light(
    light: &Light,
    bvh: &Bvh,
    sp: &SurfacePoint,
    point: &Point3<f64>,
    wo: &Vector3<f64>,
    rng: &mut impl Rng,
) -> Rgb {
    let (wi, dist, radiance) = match light.kind {
        LightKind::Sun => (-light.direction, f64::INFINITY, light.radiance_scale()),
        LightKind::Spot => {
            let to = light.position - point;
            let dist = to.norm();
            if dist == 0.0 {
                return Rgb::zeros();
            }
            let wi = to / dist;
            let cos_axis = (-wi).dot(&light.direction);
            if cos_axis < (light.cone_angle / 2.0).cos() {
                return Rgb::zeros();
            }
            (wi, dist, light.radiance_scale() / (dist * dist))
        }
        LightKind::Area => {
            let (t, b) = orthonormal_basis(&light.direction);
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let q = light.position + t * ((u - 0.5) * light.extent[0]) + b * ((v - 0.5) * light.extent[1]);
            let to = q - point;
            let dist = to.norm();
            if dist == 0.0 {
                return Rgb::zeros();
            }
            let wi = to / dist;
            let cos_light = (-wi).dot(&light.direction);
            if cos_light <= 0.0 {
                return Rgb::zeros();
            }
            let area = light.extent[0] * light.extent[1];
            (wi, dist, light.radiance_scale() * (cos_light * area / (dist * dist)))
        }
    };
    if light.max_distance.is_some_and(|m| dist > m) {
        return Rgb::zeros();
    }
    let cos_i = sp.shading_normal.dot(&wi);
    if cos_i <= 0.0 {
        return Rgb::zeros();
    }
    let f = sp.eval(wo, &wi);
    if f == Rgb::zeros() || !visible(bvh, point, &sp.geometric_normal, &wi, dist) {
        return Rgb::zeros();
    }
    f.component_mul(&radiance) * cos_i
}

/// Radiance arriving along `ray`. Emission is collected when a path hits an
/// emissive surface or leaves the scene; explicit lights are reached only
/// through next-event estimation.
pub fn trace_path(ray: Ray, scene: &Scene, bvh: &Bvh, rng: &mut impl Rng, max_bounces: u32) -> Rgb {
    let mut radiance = Rgb::zeros();
    let mut throughput = Rgb::repeat(1.0);
    let mut ray = ray;
    let mut depth = 0u32;
    loop {
        let Some(hit) = bvh.intersect(&ray) else {
            if let Some(env) = scene.environment {
                radiance += throughput.component_mul(&env);
            }
            break;
        };
        let info = hit_info(bvh, &ray, &hit);
        let material = &scene.materials[scene.objects[hit.object as usize].material];
        radiance += throughput.component_mul(&material.emission);
        if depth >= max_bounces {
            break;
        }
        let sp = SurfacePoint {
            material,
            albedo: surface_albedo(scene, &hit, &info),
            shading_normal: info.shading_normal,
            geometric_normal: info.geometric_normal,
            front_face: info.front_face,
        };
        let wo = -ray.dir;
        if sp.has_smooth_lobes() {
            for light in scene.enabled_lights() {
                radiance += throughput.component_mul(&sample_light(light, bvh, &sp, &info.point, &wo, rng));
            }
        }
        let BsdfSample::Scatter { wi, weight, .. } = sp.sample(&wo, rng) else {
            break;
        };
        throughput.component_mul_assign(&weight);
        if throughput.max() <= 0.0 {
            break;
        }
        depth += 1;
        if depth >= ROULETTE_START {
            let survive = throughput.max().min(0.95);
            if rng.random::<f64>() >= survive {
                break;
            }
            throughput /= survive;
        }
        ray = Ray::new(offset_origin(&info.point, &info.geometric_normal, &wi), wi);
    }
    radiance
}
