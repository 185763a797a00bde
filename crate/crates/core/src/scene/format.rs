//! TOML scene documents.
//!
//! ```toml
//! [meta]
//! name = "room"
//! bounds_min = [0.0, 0.0, 0.0]
//! bounds_max = [5.0, 4.0, 2.8]
//! floor_height = 0.0
//!
//! [[materials]]
//! name = "wall"
//! albedo = [0.8, 0.8, 0.8]
//!
//! [[lights]]
//! name = "ceiling"
//! kind = "area"
//! brightness = 4.0
//! position = [2.5, 2.0, 2.75]
//! direction = [0.0, 0.0, -1.0]
//! extent = [1.0, 1.0]
//!
//! [[objects]]
//! name = "table"
//! mesh = "meshes/table.obj"
//! material = "wood"
//! translation = [2.0, 2.0, 0.375]
//! rotation = [0.0, 0.0, 0.0]
//! nyu40_class = 7
//! movable = true
//! mass = 20.0
//! friction = 0.2
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    load_obj, validate_scene, Hull, Light, LightKind, Material, Mesh, PhysicalProps, Scene, SceneError, SceneObject,
    Texture,
};
use crate::geometry::{Aabb, Rgb};
use crate::image::srgb_to_linear;
use crate::scene_change::temperature_to_rgb;

type V3 = [f64; 3];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    meta: Meta,
    #[serde(default)]
    materials: Vec<MaterialEntry>,
    #[serde(default)]
    lights: Vec<LightEntry>,
    #[serde(default)]
    objects: Vec<ObjectEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    name: String,
    bounds_min: V3,
    bounds_max: V3,
    floor_height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    environment: Option<V3>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialEntry {
    name: String,
    #[serde(default = "grey")]
    albedo: V3,
    #[serde(default = "half")]
    roughness: f64,
    #[serde(default = "dielectric_tint")]
    tint: V3,
    #[serde(default = "glass_ior")]
    ior: f64,
    #[serde(default)]
    transmission: V3,
    #[serde(default = "lambert_only")]
    lobe_weights: [f64; 4],
    #[serde(default)]
    emission: V3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    texture: Option<String>,
}

fn grey() -> V3 {
    [0.5; 3]
}
fn half() -> f64 {
    0.5
}
fn dielectric_tint() -> V3 {
    [0.04; 3]
}
fn glass_ior() -> f64 {
    1.5
}
fn lambert_only() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}
fn yes() -> bool {
    true
}
fn unit_scale() -> V3 {
    [1.0; 3]
}
fn default_cone() -> f64 {
    std::f64::consts::FRAC_PI_3
}

/// One `[[lights]]` record. Also the schema of standalone lighting documents.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LightEntry {
    pub name: String,
    pub kind: LightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub brightness: f64,
    #[serde(default)]
    pub position: V3,
    pub direction: V3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
    #[serde(default = "default_cone")]
    pub cone_angle: f64,
    #[serde(default = "unit_extent")]
    pub extent: [f64; 2],
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn unit_extent() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    name: String,
    mesh: String,
    material: String,
    translation: V3,
    #[serde(default)]
    rotation: V3,
    #[serde(default = "unit_scale")]
    scale: V3,
    nyu40_class: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_id: Option<u32>,
    movable: bool,
    mass: f64,
    friction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hull_min: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hull_max: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hull_points: Option<Vec<V3>>,
}

fn v3(a: V3) -> Vector3<f64> {
    Vector3::from(a)
}

fn arr(v: &Vector3<f64>) -> V3 {
    [v.x, v.y, v.z]
}

impl LightEntry {
    pub fn into_light(self) -> Result<Light, SceneError> {
        let color = match (self.color, self.temperature) {
            (Some(c), _) => v3(c),
            (None, Some(t)) => temperature_to_rgb(t).map_err(|e| SceneError::Parse(format!("light '{}': {e}", self.name)))?,
            (None, None) => Rgb::repeat(1.0),
        };
        Ok(Light {
            name: self.name,
            kind: self.kind,
            color,
            brightness: self.brightness,
            temperature: self.temperature,
            position: Point3::from(self.position),
            direction: v3(self.direction),
            max_distance: self.max_distance,
            cone_angle: self.cone_angle,
            extent: self.extent,
            enabled: self.enabled,
        })
    }

    pub fn from_light(l: &Light) -> Self {
        Self {
            name: l.name.clone(),
            kind: l.kind,
            color: Some(arr(&l.color)),
            temperature: l.temperature,
            brightness: l.brightness,
            position: [l.position.x, l.position.y, l.position.z],
            direction: arr(&l.direction),
            max_distance: l.max_distance,
            cone_angle: l.cone_angle,
            extent: l.extent,
            enabled: l.enabled,
        }
    }
}

fn load_texture(path: &Path) -> Result<Texture, SceneError> {
    let img = image::open(path)
        .map_err(|e| SceneError::Texture {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let texels = img
        .pixels()
        .map(|p| p.0.map(|c| srgb_to_linear(c as f32 / 255.0)))
        .collect();
    Ok(Texture {
        width: img.width() as usize,
        height: img.height() as usize,
        texels,
    })
}

/// Parses a scene document. Relative mesh and texture paths resolve against `base_dir`.
pub fn scene_from_str(text: &str, base_dir: &Path) -> Result<Scene, SceneError> {
    let doc: Document = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;

    let mut materials = Vec::with_capacity(doc.materials.len());
    for m in doc.materials {
        let texture = match &m.texture {
            Some(t) => Some(Arc::new(load_texture(&base_dir.join(t))?)),
            None => None,
        };
        materials.push(Material {
            name: m.name,
            albedo: v3(m.albedo),
            roughness: m.roughness,
            microfacet_tint: v3(m.tint),
            ior: m.ior,
            transmission: v3(m.transmission),
            lobe_weights: m.lobe_weights,
            emission: v3(m.emission),
            texture_path: m.texture,
            texture,
        });
    }

    let lights = doc
        .lights
        .into_iter()
        .map(LightEntry::into_light)
        .collect::<Result<Vec<_>, _>>()?;

    let mut meshes: HashMap<PathBuf, Arc<Mesh>> = HashMap::new();
    let mut objects = Vec::with_capacity(doc.objects.len());
    for (i, o) in doc.objects.into_iter().enumerate() {
        let material = materials
            .iter()
            .position(|m| m.name == o.material)
            .ok_or_else(|| SceneError::UnknownMaterial {
                object: o.name.clone(),
                material: o.material.clone(),
            })?;
        let mesh_path = base_dir.join(&o.mesh);
        let mesh = match meshes.get(&mesh_path) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(load_obj(&mesh_path)?);
                meshes.insert(mesh_path, m.clone());
                m
            }
        };
        let scale = v3(o.scale);
        let hull = match (o.hull_points, o.hull_min, o.hull_max) {
            (Some(pts), _, _) => Hull::Convex(pts.into_iter().map(Point3::from).collect()),
            (None, Some(lo), Some(hi)) => Hull::Box(Aabb::new(Point3::from(lo), Point3::from(hi))),
            (None, None, None) => {
                let b = mesh.bounds();
                Hull::Box(Aabb::new(
                    Point3::from(b.min.coords.component_mul(&scale)),
                    Point3::from(b.max.coords.component_mul(&scale)),
                ))
            }
            _ => {
                return Err(SceneError::Parse(format!(
                    "objects[{i}] '{}': hull_min and hull_max must be given together",
                    o.name
                )))
            }
        };
        objects.push(SceneObject {
            instance_id: o.instance_id.unwrap_or(i as u32 + 1),
            name: o.name,
            mesh,
            mesh_source: o.mesh,
            material,
            translation: v3(o.translation),
            rotation: v3(o.rotation),
            scale,
            nyu40_class: o.nyu40_class,
            physical: PhysicalProps {
                mass: o.mass,
                friction: o.friction,
                movable: o.movable,
                hull,
            },
        });
    }

    let scene = Scene {
        name: doc.meta.name,
        materials,
        objects,
        lights,
        bounds: Aabb::new(Point3::from(doc.meta.bounds_min), Point3::from(doc.meta.bounds_max)),
        floor_height: doc.meta.floor_height,
        environment: doc.meta.environment.map(v3),
    };
    let violations = validate_scene(&scene);
    if violations.is_empty() {
        Ok(scene)
    } else {
        Err(SceneError::Validation(violations))
    }
}

/// Loads and validates a scene document from disk.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    scene_from_str(&text, base)
}

/// Serializes a scene. Meshes and textures are referenced by their source paths.
pub fn scene_to_string(scene: &Scene) -> String {
    let doc = Document {
        meta: Meta {
            name: scene.name.clone(),
            bounds_min: scene.bounds.min.into(),
            bounds_max: scene.bounds.max.into(),
            floor_height: scene.floor_height,
            environment: scene.environment.as_ref().map(arr),
        },
        materials: scene
            .materials
            .iter()
            .map(|m| MaterialEntry {
                name: m.name.clone(),
                albedo: arr(&m.albedo),
                roughness: m.roughness,
                tint: arr(&m.microfacet_tint),
                ior: m.ior,
                transmission: arr(&m.transmission),
                lobe_weights: m.lobe_weights,
                emission: arr(&m.emission),
                texture: m.texture_path.clone(),
            })
            .collect(),
        lights: scene.lights.iter().map(LightEntry::from_light).collect(),
        objects: scene
            .objects
            .iter()
            .map(|o| {
                let (hull_min, hull_max, hull_points) = match &o.physical.hull {
                    Hull::Box(b) => (Some(b.min.into()), Some(b.max.into()), None),
                    Hull::Convex(pts) => (None, None, Some(pts.iter().map(|p| (*p).into()).collect())),
                };
                ObjectEntry {
                    name: o.name.clone(),
                    mesh: o.mesh_source.clone(),
                    material: scene.materials[o.material].name.clone(),
                    translation: arr(&o.translation),
                    rotation: arr(&o.rotation),
                    scale: arr(&o.scale),
                    nyu40_class: o.nyu40_class,
                    instance_id: Some(o.instance_id),
                    movable: o.physical.movable,
                    mass: o.physical.mass,
                    friction: o.physical.friction,
                    hull_min,
                    hull_max,
                    hull_points,
                }
            })
            .collect(),
    };
    toml::to_string_pretty(&doc).expect("scene document serializes")
}

/// Writes the scene document. Meshes missing at their relative source path
/// next to `path` are written there as OBJ files.
pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| SceneError::Io { path: p, source }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    for o in &scene.objects {
        let target = base.join(&o.mesh_source);
        if !target.exists() {
            if let Some(dir) = target.parent() {
                std::fs::create_dir_all(dir).map_err(io(dir))?;
            }
            std::fs::write(&target, o.mesh.to_obj_string()).map_err(io(&target))?;
        }
    }
    std::fs::write(path, scene_to_string(scene)).map_err(io(path))
}

/// Parses a standalone lighting document (`[[lights]]` records only).
pub fn lights_from_str(text: &str) -> Result<Vec<Light>, SceneError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        lights: Vec<LightEntry>,
    }
    let doc: Doc = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    doc.lights.into_iter().map(LightEntry::into_light).collect()
}

pub fn lights_to_string(lights: &[Light]) -> String {
    #[derive(Serialize)]
    struct Doc {
        lights: Vec<LightEntry>,
    }
    toml::to_string_pretty(&Doc {
        lights: lights.iter().map(LightEntry::from_light).collect(),
    })
    .expect("lighting document serializes")
}
