use nalgebra::{Point3, Vector3};

use super::{Scene, SceneError};
use crate::geometry::Aabb;

const EDGE_EPS: f64 = 1e-9;

/// Voxel occupancy over the scene bounds. Cells are indexed `[i, j, k]`
/// along x, y, z from `origin`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeSpaceMap {
    pub resolution: f64,
    pub origin: Point3<f64>,
    pub dims: [usize; 3],
    pub occupancy: Vec<bool>,
    pub floor_height: f64,
}

impl FreeSpaceMap {
    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn cell_of(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            if !(f >= 0.0 && (f as usize) < self.dims[a]) {
                return None;
            }
            c[a] = f as usize;
        }
        Some(c)
    }

    pub fn cell_bounds(&self, c: [usize; 3]) -> Aabb {
        let lo = self.origin + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.resolution;
        Aabb::new(lo, lo + Vector3::repeat(self.resolution))
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Point3<f64> {
        self.cell_bounds(c).center()
    }

    pub fn cell_occupied(&self, c: [usize; 3]) -> bool {
        self.occupancy[self.index(c)]
    }

    /// Points outside the grid count as occupied.
    pub fn is_occupied(&self, p: &Point3<f64>) -> bool {
        self.cell_of(p).is_none_or(|c| self.cell_occupied(c))
    }

    pub fn is_free(&self, p: &Point3<f64>) -> bool {
        !self.is_occupied(p)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nz)
            .flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
            .filter(|c| !self.cell_occupied(*c))
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }

    /// Half-open index range of cells whose interior overlaps `[lo, hi]` on one axis.
    fn axis_range(&self, axis: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = (lo - self.origin[axis]) / self.resolution;
        let b = (hi - self.origin[axis]) / self.resolution;
        let first = (a + EDGE_EPS).floor().max(0.0);
        let last = (b - EDGE_EPS).ceil().min(self.dims[axis] as f64);
        if last <= first {
            return 0..0;
        }
        first as usize..last as usize
    }

    fn mark_box(&mut self, b: &Aabb) {
        let xs = self.axis_range(0, b.min.x, b.max.x);
        let ys = self.axis_range(1, b.min.y, b.max.y);
        let zs = self.axis_range(2, b.min.z, b.max.z);
        for k in zs {
            for j in ys.clone() {
                for i in xs.clone() {
                    let idx = self.index([i, j, k]);
                    self.occupancy[idx] = true;
                }
            }
        }
    }
}

/// Rasterizes object hulls into a voxel grid covering the scene bounds.
/// Cells overlapping a hull, or reaching past the bounds, are occupied.
pub fn compute_free_space(scene: &Scene, cell: f64) -> Result<FreeSpaceMap, SceneError> {
    let extent = scene.bounds.extent();
    let smallest = extent.min();
    if !(cell > 0.0) || cell > smallest {
        return Err(SceneError::CellSize { cell, extent: smallest });
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = (extent[a] / cell - EDGE_EPS).ceil() as usize;
    }
    let mut map = FreeSpaceMap {
        resolution: cell,
        origin: scene.bounds.min,
        dims,
        occupancy: vec![false; dims[0] * dims[1] * dims[2]],
        floor_height: scene.floor_height,
    };

    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if !scene.bounds.contains_box(&map.cell_bounds([i, j, k]), 1e-9) {
                    let idx = map.index([i, j, k]);
                    map.occupancy[idx] = true;
                }
            }
        }
    }
    for o in &scene.objects {
        map.mark_box(&o.world_hull());
    }
    Ok(map)
}
