//! Scene description: geometry, four-lobe materials, lights, semantic
//! labels, physical properties and free-space occupancy.

mod format;
mod free_space;
mod mesh;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pose_from_parts, Aabb, Pose, Rgb};

pub use format::{lights_from_str, lights_to_string, load_scene, save_scene, scene_from_str, scene_to_string};
pub use free_space::{compute_free_space, FreeSpaceMap};
pub use mesh::{area_weighted_normals, load_obj, Mesh};

pub const MASS_RANGE: (f64, f64) = (0.05, 43.3);
pub const FRICTION_RANGE: (f64, f64) = (0.08, 0.27);
pub const NYU40_RANGE: (u16, u16) = (1, 40);

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene document: {0}")]
    Parse(String),
    #[error("mesh {path}: {message}")]
    Mesh { path: PathBuf, message: String },
    #[error("texture {path}: {message}")]
    Texture { path: PathBuf, message: String },
    #[error("object {object} references unknown material '{material}'")]
    UnknownMaterial { object: String, material: String },
    #[error("scene validation failed:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Violation>),
    #[error("cell size {cell} m is invalid for a scene extent of {extent} m")]
    CellSize { cell: f64, extent: f64 },
}

/// Linear-RGB texture modulating a material's lambertian albedo.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<[f32; 3]>,
}

impl Texture {
    /// Nearest-texel lookup with wrap-around addressing.
    pub fn sample(&self, uv: [f64; 2]) -> Rgb {
        let u = uv[0] - uv[0].floor();
        let v = 1.0 - (uv[1] - uv[1].floor());
        let x = ((u * self.width as f64) as usize).min(self.width - 1);
        let y = ((v * self.height as f64) as usize).min(self.height - 1);
        let t = self.texels[y * self.width + x];
        Rgb::new(t[0] as f64, t[1] as f64, t[2] as f64)
    }
}

/// Four-lobe composite BRDF: lambertian, GGX microfacet, smooth dielectric
/// and straight-through transmission, mixed by `lobe_weights` in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub name: String,
    pub albedo: Rgb,
    pub roughness: f64,
    pub microfacet_tint: Rgb,
    pub ior: f64,
    pub transmission: Rgb,
    pub lobe_weights: [f64; 4],
    pub emission: Rgb,
    pub texture_path: Option<String>,
    pub texture: Option<Arc<Texture>>,
}

impl Material {
    pub fn lambertian(name: &str, albedo: Rgb) -> Self {
        Self {
            name: name.to_string(),
            albedo,
            roughness: 0.5,
            microfacet_tint: Rgb::repeat(0.04),
            ior: 1.5,
            transmission: Rgb::zeros(),
            lobe_weights: [1.0, 0.0, 0.0, 0.0],
            emission: Rgb::zeros(),
            texture_path: None,
            texture: None,
        }
    }

    pub fn emitter(name: &str, emission: Rgb) -> Self {
        Self {
            lobe_weights: [0.0; 4],
            emission,
            ..Self::lambertian(name, Rgb::zeros())
        }
    }

    pub fn is_emissive(&self) -> bool {
        self.emission.iter().any(|&e| e > 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightKind {
    Sun,
    Spot,
    Area,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Light {
    pub name: String,
    pub kind: LightKind,
    pub color: Rgb,
    /// Radiance (area), intensity (spot) or irradiance (sun) scale.
    pub brightness: f64,
    pub temperature: Option<f64>,
    pub position: Point3<f64>,
    /// Propagation direction for sun and spot, emitting-side normal for area lights.
    pub direction: Vector3<f64>,
    pub max_distance: Option<f64>,
    /// Full opening angle of a spot cone.
    pub cone_angle: f64,
    pub extent: [f64; 2],
    pub enabled: bool,
}

impl Light {
    pub fn radiance_scale(&self) -> Rgb {
        self.color * self.brightness
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Hull {
    /// Box in object-local coordinates.
    Box(Aabb),
    /// Convex point set in object-local coordinates.
    Convex(Vec<Point3<f64>>),
}

impl Hull {
    pub fn local_bounds(&self) -> Aabb {
        match self {
            Hull::Box(b) => *b,
            Hull::Convex(pts) => Aabb::from_points(pts.iter()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalProps {
    pub mass: f64,
    pub friction: f64,
    pub movable: bool,
    pub hull: Hull,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub name: String,
    pub mesh: Arc<Mesh>,
    /// Mesh path as written in the scene document.
    pub mesh_source: String,
    pub material: usize,
    pub translation: Vector3<f64>,
    /// Rotation vector (axis × angle, radians).
    pub rotation: Vector3<f64>,
    /// Per-axis scale applied to the mesh before the rigid pose.
    pub scale: Vector3<f64>,
    pub nyu40_class: u16,
    pub instance_id: u32,
    pub physical: PhysicalProps,
}

impl SceneObject {
    /// Unmovable object at the origin with unit scale, NYU40 class 1 and a
    /// box hull around the mesh.
    pub fn new(name: &str, mesh: Mesh, material: usize, instance_id: u32) -> Self {
        let hull = Hull::Box(mesh.bounds());
        Self {
            name: name.into(),
            mesh_source: format!("{name}.obj"),
            mesh: Arc::new(mesh),
            material,
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
            scale: Vector3::repeat(1.0),
            nyu40_class: 1,
            instance_id,
            physical: PhysicalProps {
                mass: 1.0,
                friction: 0.1,
                movable: false,
                hull,
            },
        }
    }

    pub fn pose(&self) -> Pose {
        pose_from_parts(self.translation, self.rotation)
    }

    /// World-space bounding box of the collision hull.
    pub fn world_hull(&self) -> Aabb {
        let pose = self.pose();
        match &self.physical.hull {
            Hull::Box(b) => b.transformed(&pose),
            Hull::Convex(pts) => Aabb::from_points(pts.iter().map(|p| pose * p).collect::<Vec<_>>().iter()),
        }
    }

    /// Mesh bounds after scale, in object-local coordinates.
    pub fn scaled_mesh_bounds(&self) -> Aabb {
        let b = self.mesh.bounds();
        Aabb::new(
            Point3::from(b.min.coords.component_mul(&self.scale)),
            Point3::from(b.max.coords.component_mul(&self.scale)),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub materials: Vec<Material>,
    pub objects: Vec<SceneObject>,
    pub lights: Vec<Light>,
    pub bounds: Aabb,
    pub floor_height: f64,
    /// Uniform radiance for rays leaving the scene.
    pub environment: Option<Rgb>,
}

impl Scene {
    /// Scene without materials, objects or lights.
    pub fn empty(name: &str, bounds: Aabb) -> Self {
        Self {
            name: name.into(),
            materials: Vec::new(),
            objects: Vec::new(),
            lights: Vec::new(),
            floor_height: bounds.min.z,
            bounds,
            environment: None,
        }
    }

    pub fn enabled_lights(&self) -> impl Iterator<Item = &Light> {
        self.lights.iter().filter(|l| l.enabled)
    }

    pub fn triangle_count(&self) -> usize {
        self.objects.iter().map(|o| o.mesh.triangles.len()).sum()
    }

    pub fn object_by_instance(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.instance_id == id)
    }
}

/// A broken invariant, naming where and which rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.subject, self.field, self.rule)
    }
}

const UNIT_TOL: f64 = 1e-6;

fn in_unit_range(c: &Rgb) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

/// Checks every type invariant. An empty list means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, field: &str, rule: String| {
        out.push(Violation {
            subject,
            field: field.to_string(),
            rule,
        })
    };

    if scene.bounds.is_empty() || scene.bounds.extent().iter().any(|e| *e <= 0.0) {
        push("meta".into(), "bounds", "bounds must have positive extent on every axis".into());
    }

    for (i, m) in scene.materials.iter().enumerate() {
        let subject = format!("materials[{i}] '{}'", m.name);
        if m.lobe_weights.iter().any(|w| *w < 0.0) {
            push(subject.clone(), "lobe_weights", "weights must be nonnegative".into());
        }
        let sum: f64 = m.lobe_weights.iter().sum();
        if sum > 1.0 + 1e-9 {
            push(subject.clone(), "lobe_weights", format!("weights sum to {sum}, must be <= 1"));
        }
        if !in_unit_range(&m.albedo) {
            push(subject.clone(), "albedo", "components must lie in [0, 1]".into());
        }
        if !in_unit_range(&m.microfacet_tint) {
            push(subject.clone(), "tint", "components must lie in [0, 1]".into());
        }
        if !in_unit_range(&m.transmission) {
            push(subject.clone(), "transmission", "components must lie in [0, 1]".into());
        }
        if !(m.roughness > 0.0 && m.roughness <= 1.0) {
            push(subject.clone(), "roughness", format!("{} outside (0, 1]", m.roughness));
        }
        if !(m.ior >= 1.0) {
            push(subject.clone(), "ior", format!("{} must be >= 1", m.ior));
        }
        if m.emission.iter().any(|e| *e < 0.0) {
            push(subject, "emission", "components must be >= 0".into());
        }
    }

    for (i, l) in scene.lights.iter().enumerate() {
        let subject = format!("lights[{i}] '{}'", l.name);
        if (l.direction.norm() - 1.0).abs() > UNIT_TOL {
            push(subject.clone(), "direction", format!("norm {} is not 1", l.direction.norm()));
        }
        if !(l.brightness >= 0.0) {
            push(subject.clone(), "brightness", "must be >= 0".into());
        }
        if !in_unit_range(&l.color) {
            push(subject.clone(), "color", "components must lie in [0, 1]".into());
        }
        if let Some(t) = l.temperature {
            if !(1000.0..=12000.0).contains(&t) {
                push(subject.clone(), "temperature", format!("{t} K outside [1000, 12000]"));
            }
        }
        if l.kind == LightKind::Spot && !(l.cone_angle > 0.0 && l.cone_angle < std::f64::consts::PI) {
            push(subject.clone(), "cone_angle", format!("{} outside (0, pi)", l.cone_angle));
        }
        if l.kind == LightKind::Area && !(l.extent[0] > 0.0 && l.extent[1] > 0.0) {
            push(subject, "extent", "width and height must be positive".into());
        }
    }
    let any_source = scene.environment.is_some()
        || scene.enabled_lights().next().is_some()
        || scene.materials.iter().any(Material::is_emissive);
    if !any_source {
        push("scene".into(), "lights", "at least one enabled light or emitter is required".into());
    }

    let mut seen_ids: Vec<(u32, usize)> = Vec::new();
    for (i, o) in scene.objects.iter().enumerate() {
        let subject = format!("objects[{i}] '{}'", o.name);
        let mesh = &o.mesh;
        let nv = mesh.vertices.len();
        if !mesh.triangles.is_empty() && nv < 3 {
            push(subject.clone(), "mesh.vertices", format!("{nv} vertices, need at least 3"));
        }
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v as usize >= nv) {
                push(
                    subject.clone(),
                    &format!("mesh.triangles[{t}]"),
                    format!("index out of range (vertex count {nv})"),
                );
            }
        }
        if mesh.normals.len() != nv {
            push(
                subject.clone(),
                "mesh.vertex_normals",
                format!("{} normals for {nv} vertices", mesh.normals.len()),
            );
        }
        for (v, n) in mesh.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > UNIT_TOL {
                push(subject.clone(), &format!("mesh.vertex_normals[{v}]"), format!("norm {} is not 1", n.norm()));
            }
        }
        if o.material >= scene.materials.len() {
            push(subject.clone(), "material", "material index out of range".into());
        }
        if !(NYU40_RANGE.0..=NYU40_RANGE.1).contains(&o.nyu40_class) {
            push(subject.clone(), "nyu40_class", format!("{} outside [1, 40]", o.nyu40_class));
        }
        if o.instance_id == 0 {
            push(subject.clone(), "instance_id", "must be positive".into());
        }
        if let Some(&(_, first)) = seen_ids.iter().find(|(id, _)| *id == o.instance_id) {
            push(
                subject.clone(),
                "instance_id",
                format!(
                    "duplicate instance id {} shared by objects[{first}] '{}' and objects[{i}] '{}'",
                    o.instance_id, scene.objects[first].name, o.name
                ),
            );
        } else {
            seen_ids.push((o.instance_id, i));
        }
        let p = &o.physical;
        if !(MASS_RANGE.0..=MASS_RANGE.1).contains(&p.mass) {
            push(
                subject.clone(),
                "physical.mass",
                format!("{} kg outside [{}, {}]", p.mass, MASS_RANGE.0, MASS_RANGE.1),
            );
        }
        if !(FRICTION_RANGE.0..=FRICTION_RANGE.1).contains(&p.friction) {
            push(
                subject.clone(),
                "physical.friction",
                format!("{} outside [{}, {}]", p.friction, FRICTION_RANGE.0, FRICTION_RANGE.1),
            );
        }
        if o.scale.iter().any(|s| *s <= 0.0) {
            push(subject.clone(), "scale", "components must be positive".into());
        }
        let hull = p.hull.local_bounds();
        let mb = o.scaled_mesh_bounds();
        let footprint_ok = (0..2).all(|a| hull.min[a] <= mb.min[a] + 1e-6 && hull.max[a] >= mb.max[a] - 1e-6);
        if !footprint_ok {
            push(subject.clone(), "physical.hull", "hull does not enclose the mesh footprint".into());
        }
        if !scene.bounds.contains_box(&o.world_hull(), 1e-6) {
            push(subject, "physical.hull", "hull extends outside scene bounds".into());
        }
    }
    out
}
