//! Binned-SAH bounding volume hierarchy over world-space triangles.

use nalgebra::{Point3, Vector3};

use crate::geometry::Aabb;
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    /// Unit direction.
    pub dir: Vector3<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Self {
            origin,
            dir,
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub object: u32,
    pub triangle: u32,
    /// Barycentric weights of vertices 1 and 2.
    pub u: f64,
    pub v: f64,
}

impl Hit {
    /// Ordering used to pick the nearest hit: distance, then object, then triangle.
    #[inline]
    fn closer_than(&self, other: &Hit) -> bool {
        (self.t, self.object, self.triangle) < (other.t, other.object, other.triangle)
    }
}

/// A world-space triangle with precomputed edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v0: Point3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub object: u32,
    pub index: u32,
}

impl Triangle {
    pub fn vertices(&self) -> [Point3<f64>; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices().iter())
    }

    pub fn centroid(&self) -> Point3<f64> {
        self.v0 + (self.e1 + self.e2) / 3.0
    }

    /// Möller–Trumbore intersection.
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64, f64)> {
        let p = ray.dir.cross(&self.e2);
        let det = self.e1.dot(&p);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - self.v0;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&self.e1);
        let v = ray.dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(&q) * inv;
        (t > ray.t_min && t < ray.t_max).then_some((t, u, v))
    }
}

/// Shading attributes of one triangle in world space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleShading {
    pub normals: [Vector3<f64>; 3],
    pub geometric_normal: Vector3<f64>,
    pub uv: Option<[[f64; 2]; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum NodeKind {
    Leaf { first: u32, count: u32 },
    Inner { right: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices in leaf order.
    order: Vec<u32>,
    triangles: Vec<Triangle>,
    shading: Vec<TriangleShading>,
}

const BINS: usize = 12;
const MAX_LEAF: usize = 4;
const TRAVERSAL_COST: f64 = 1.0;
/// Below this depth only halving splits are made, bounding the traversal stack.
const MAX_SAH_DEPTH: usize = 48;

fn world_triangles(scene: &Scene) -> (Vec<Triangle>, Vec<TriangleShading>) {
    let mut tris = Vec::with_capacity(scene.triangle_count());
    let mut shading = Vec::with_capacity(scene.triangle_count());
    for (oi, obj) in scene.objects.iter().enumerate() {
        let pose = obj.pose();
        let s = obj.scale;
        let inv_s = s.map(|c| 1.0 / c);
        let mesh = &obj.mesh;
        let world: Vec<Point3<f64>> = mesh
            .vertices
            .iter()
            .map(|v| pose * Point3::from(v.coords.component_mul(&s)))
            .collect();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = t.map(|i| i as usize);
            let tri = Triangle {
                v0: world[a],
                e1: world[b] - world[a],
                e2: world[c] - world[a],
                object: oi as u32,
                index: ti as u32,
            };
            let gn = tri.e1.cross(&tri.e2).try_normalize(0.0).unwrap_or_else(Vector3::z);
            let normals = [a, b, c].map(|i| {
                (pose.rotation * mesh.normals[i].component_mul(&inv_s))
                    .try_normalize(0.0)
                    .unwrap_or(gn)
            });
            let uv = mesh.uv.as_ref().map(|uv| [uv[a], uv[b], uv[c]]);
            tris.push(tri);
            shading.push(TriangleShading {
                normals,
                geometric_normal: gn,
                uv,
            });
        }
    }
    (tris, shading)
}

struct BuildItem {
    bounds: Aabb,
    centroid: Point3<f64>,
    index: u32,
}

impl Bvh {
    /// Builds the hierarchy over every triangle of every object.
    pub fn build(scene: &Scene) -> Self {
        let (triangles, shading) = world_triangles(scene);
        let mut items: Vec<BuildItem> = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| BuildItem {
                bounds: t.bounds(),
                centroid: t.centroid(),
                index: i as u32,
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * items.len().max(1)),
            order: Vec::with_capacity(items.len()),
            triangles,
            shading,
        };
        if items.is_empty() {
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                kind: NodeKind::Leaf { first: 0, count: 0 },
            });
        } else {
            bvh.build_node(&mut items, 0);
        }
        bvh
    }

    fn build_node(&mut self, items: &mut [BuildItem], depth: usize) -> u32 {
        let bounds = items.iter().fold(Aabb::empty(), |b, it| b.union(&it.bounds));
        let node = self.nodes.len() as u32;
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf { first: 0, count: 0 },
        });

        let split = if items.len() <= MAX_LEAF / 2 || depth >= MAX_SAH_DEPTH {
            None
        } else {
            best_split(items, &bounds)
        };
        let mid = match split {
            Some(mid) => mid,
            None if items.len() > MAX_LEAF => items.len() / 2,
            None => {
                let first = self.order.len() as u32;
                self.order.extend(items.iter().map(|it| it.index));
                self.nodes[node as usize].kind = NodeKind::Leaf {
                    first,
                    count: items.len() as u32,
                };
                return node;
            }
        };
        let (left, right) = items.split_at_mut(mid);
        self.build_node(left, depth + 1);
        let right = self.build_node(right, depth + 1);
        self.nodes[node as usize].kind = NodeKind::Inner { right };
        node
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn shading(&self, object: u32, triangle: u32) -> &TriangleShading {
        &self.shading[self.flat_index(object, triangle)]
    }

    fn flat_index(&self, object: u32, triangle: u32) -> usize {
        // Triangles are stored object by object in scene order.
        let start = self.triangles.partition_point(|t| t.object < object);
        start + triangle as usize
    }

    /// Nearest intersection along the ray.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        self.traverse(ray, false)
    }

    /// True when anything blocks the ray within `(t_min, t_max)`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        self.traverse(ray, true).is_some()
    }

    fn traverse(&self, ray: &Ray, any_hit: bool) -> Option<Hit> {
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut best_t = ray.t_max;
        let mut stack = [0u32; 128];
        let mut sp = 0usize;
        let root = &self.nodes[0];
        if slab(&root.bounds, ray, &inv, best_t).is_none() {
            return None;
        }
        let mut current = 0u32;
        loop {
            let node = &self.nodes[current as usize];
            match node.kind {
                NodeKind::Leaf { first, count } => {
                    for &ti in &self.order[first as usize..(first + count) as usize] {
                        let tri = &self.triangles[ti as usize];
                        if let Some((t, u, v)) = tri.intersect(ray) {
                            let hit = Hit {
                                t,
                                object: tri.object,
                                triangle: tri.index,
                                u,
                                v,
                            };
                            if best.as_ref().is_none_or(|b| hit.closer_than(b)) {
                                best_t = t;
                                best = Some(hit);
                                if any_hit {
                                    return best;
                                }
                            }
                        }
                    }
                }
                NodeKind::Inner { right } => {
                    let left = current + 1;
                    let tl = slab(&self.nodes[left as usize].bounds, ray, &inv, best_t);
                    let tr = slab(&self.nodes[right as usize].bounds, ray, &inv, best_t);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            let (near, far) = if a <= b { (left, right) } else { (right, left) };
                            stack[sp] = far;
                            sp += 1;
                            current = near;
                            continue;
                        }
                        (Some(_), None) => {
                            current = left;
                            continue;
                        }
                        (None, Some(_)) => {
                            current = right;
                            continue;
                        }
                        (None, None) => {}
                    }
                }
            }
            // Pop the next node that can still hold a hit no farther than the best.
            loop {
                if sp == 0 {
                    return best;
                }
                sp -= 1;
                let n = stack[sp];
                if slab(&self.nodes[n as usize].bounds, ray, &inv, best_t).is_some() {
                    current = n;
                    break;
                }
            }
        }
    }

    /// Structural invariants: every triangle referenced once, children inside parents.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![0u32; self.triangles.len()];
        for &i in &self.order {
            seen[i as usize] += 1;
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {i} referenced {} times", seen[i]));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Inner { right } => {
                    for c in [i + 1, right as usize] {
                        if !n.bounds.contains_box(&self.nodes[c].bounds, 0.0) {
                            return Err(format!("node {c} escapes its parent {i}"));
                        }
                    }
                }
                NodeKind::Leaf { first, count } => {
                    for &ti in &self.order[first as usize..(first + count) as usize] {
                        if !n.bounds.contains_box(&self.triangles[ti as usize].bounds(), 0.0) {
                            return Err(format!("triangle {ti} escapes leaf {i}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Entry distance of the ray into the box, if it enters before `t_max`.
#[inline]
fn slab(b: &Aabb, ray: &Ray, inv: &Vector3<f64>, t_max: f64) -> Option<f64> {
    let mut t0 = ray.t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        let near = (b.min[a] - ray.origin[a]) * inv[a];
        let far = (b.max[a] - ray.origin[a]) * inv[a];
        let (near, far) = if near <= far { (near, far) } else { (far, near) };
        // NaN (0 * inf) leaves the bound unchanged.
        t0 = if near > t0 { near } else { t0 };
        t1 = if far < t1 { far } else { t1 };
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

fn best_split(items: &mut [BuildItem], bounds: &Aabb) -> Option<usize> {
    let cb = items.iter().fold(Aabb::empty(), |b, it| b.grow(&it.centroid));
    let mut best: Option<(f64, usize, f64)> = None;
    for axis in 0..3 {
        let lo = cb.min[axis];
        let extent = cb.max[axis] - lo;
        if !(extent > 0.0) {
            continue;
        }
        let scale = BINS as f64 / extent;
        let bin_of = |c: f64| (((c - lo) * scale) as usize).min(BINS - 1);
        let mut counts = [0usize; BINS];
        let mut boxes = [Aabb::empty(); BINS];
        for it in items.iter() {
            let b = bin_of(it.centroid[axis]);
            counts[b] += 1;
            boxes[b] = boxes[b].union(&it.bounds);
        }
        let mut right_area = [0.0; BINS];
        let mut right_count = [0usize; BINS];
        let mut acc = Aabb::empty();
        let mut n = 0;
        for b in (1..BINS).rev() {
            acc = acc.union(&boxes[b]);
            n += counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = n;
        }
        let mut acc = Aabb::empty();
        let mut n = 0;
        for b in 0..BINS - 1 {
            acc = acc.union(&boxes[b]);
            n += counts[b];
            if n == 0 || right_count[b + 1] == 0 {
                continue;
            }
            let cost = acc.surface_area() * n as f64 + right_area[b + 1] * right_count[b + 1] as f64;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, lo + (b + 1) as f64 / scale));
            }
        }
    }
    let (cost, axis, pivot) = best?;
    let parent_area = bounds.surface_area();
    let leaf_cost = items.len() as f64;
    let split_cost = TRAVERSAL_COST + if parent_area > 0.0 { cost / parent_area } else { leaf_cost };
    if split_cost >= leaf_cost && items.len() <= MAX_LEAF {
        return None;
    }
    let mut mid = 0;
    for i in 0..items.len() {
        if items[i].centroid[axis] < pivot {
            items.swap(i, mid);
            mid += 1;
        }
    }
    (mid > 0 && mid < items.len()).then_some(mid)
}

/// Nearest hit by testing every triangle, with the same tie-break as the hierarchy.
pub fn brute_force_intersect(triangles: &[Triangle], ray: &Ray) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for tri in triangles {
        if let Some((t, u, v)) = tri.intersect(ray) {
            let hit = Hit {
                t,
                object: tri.object,
                triangle: tri.index,
                u,
                v,
            };
            if best.as_ref().is_none_or(|b| hit.closer_than(b)) {
                best = Some(hit);
            }
        }
    }
    best
}
