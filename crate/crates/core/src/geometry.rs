//! Rigid transforms, rotation vectors and axis-aligned boxes.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// World-from-body rigid transform (meters).
pub type Pose = Isometry3<f64>;

/// Linear RGB triple.
pub type Rgb = Vector3<f64>;

/// A pose with a timestamp in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

impl TimedPose {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        Self { timestamp, pose }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.pose.translation.vector)
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        rotation_vector(&self.pose.rotation)
    }
}

/// Axis-angle vector of a rotation, angle in `[0, π]`.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.scaled_axis()
}

pub fn rotation_from_vector(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

pub fn pose_from_parts(position: Vector3<f64>, rotation_vector: Vector3<f64>) -> Pose {
    Isometry3::from_parts(Translation3::from(position), rotation_from_vector(&rotation_vector))
}

/// Interpolates linearly in translation and spherically in rotation.
pub fn interpolate_pose(a: &Pose, b: &Pose, s: f64) -> Pose {
    if a == b {
        return *a;
    }
    let t = a.translation.vector + (b.translation.vector - a.translation.vector) * s;
    let r = a
        .rotation
        .try_slerp(&b.rotation, s, 1e-12)
        .unwrap_or(a.rotation);
    Isometry3::from_parts(Translation3::from(t), r)
}

/// Camera pose at `eye` looking at `target` (x right, y down, z forward)
/// with image "up" as close to `up` as possible. Falls back to another up
/// axis when the view direction is parallel to `up`.
pub fn look_at(eye: &Point3<f64>, target: &Point3<f64>, up: &Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let x = z
        .cross(up)
        .try_normalize(1e-9)
        .or_else(|| z.cross(&Vector3::y()).try_normalize(1e-9))
        .unwrap_or_else(|| z.cross(&Vector3::x()).normalize());
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    let r = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
    Isometry3::from_parts(Translation3::from(eye.coords), r)
}

/// `[v]×`
pub fn skew(v: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Orthonormal basis `(t, b)` completing the unit vector `n`.
pub fn orthonormal_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    // Duff et al., "Building an Orthonormal Basis, Revisited"
    let sign = 1.0_f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = Vector3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = Vector3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        points.into_iter().fold(Self::empty(), |b, p| b.grow(p))
    }

    pub fn grow(&self, p: &Point3<f64>) -> Self {
        Self {
            min: self.min.inf(p),
            max: self.max.sup(p),
        }
    }

    pub fn union(&self, o: &Aabb) -> Self {
        Self {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }

    /// Bounding box of this box after a rigid transform.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self::from_points(self.corners().iter().map(|c| pose * c).collect::<Vec<_>>().iter())
    }

    pub fn translated(&self, d: &Vector3<f64>) -> Self {
        Self {
            min: self.min + d,
            max: self.max + d,
        }
    }

    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, o: &Aabb, tol: f64) -> bool {
        (0..3).all(|i| o.min[i] >= self.min[i] - tol && o.max[i] <= self.max[i] + tol)
    }

    /// Per-axis overlap lengths; negative entries mean a gap on that axis.
    pub fn overlap(&self, o: &Aabb) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.max[i].min(o.max[i]) - self.min[i].max(o.min[i]))
    }

    /// Interpenetration depth: the smallest per-axis overlap, or 0 when apart.
    pub fn penetration(&self, o: &Aabb) -> f64 {
        self.overlap(o).min().max(0.0)
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        if e.iter().any(|v| *v < 0.0) {
            return 0.0;
        }
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }
}
