use crate::error::{Error, Result};
use crate::mathcore::Vec3;

use super::bounds_of;

/// Vertex counts at or above this use the uniform-grid index.
pub const GRID_THRESHOLD: usize = 4096;

/// Nearest vertex to `p` as `(index, distance)`; ties go to the lowest index.
pub fn nearest_vertex(verts: &[Vec3], p: &Vec3) -> Result<(usize, f64)> {
    if verts.len() >= GRID_THRESHOLD {
        NearestVertexIndex::build(verts)?.query(p)
    } else {
        nearest_vertex_brute_force(verts, p)
    }
}

pub fn nearest_vertex_brute_force(verts: &[Vec3], p: &Vec3) -> Result<(usize, f64)> {
    if verts.is_empty() {
        return Err(Error::Empty("nearest-vertex query on empty vertex list"));
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, v) in verts.iter().enumerate() {
        let d2 = dist2(v, p);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

#[inline]
fn dist2(v: &Vec3, p: &Vec3) -> f64 {
    let dx = v.x - p.x;
    let dy = v.y - p.y;
    let dz = v.z - p.z;
    dx * dx + dy * dy + dz * dz
}

/// Reusable nearest-vertex accelerator. Below [`GRID_THRESHOLD`] vertices it
/// scans; above it buckets vertices in a uniform grid and searches rings of
/// cells outward. Both paths return identical answers, tie rule included.
#[derive(Debug, Clone)]
pub struct NearestVertexIndex<'a> {
    verts: &'a [Vec3],
    grid: Option<UniformGrid>,
}

#[derive(Debug, Clone)]
struct UniformGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NearestVertexIndex<'a> {
    pub fn build(verts: &'a [Vec3]) -> Result<Self> {
        Self::with_grid(verts, verts.len() >= GRID_THRESHOLD)
    }

    /// Forces the grid path on or off (used to cross-check both paths).
    pub fn with_grid(verts: &'a [Vec3], use_grid: bool) -> Result<Self> {
        if verts.is_empty() {
            return Err(Error::Empty("nearest-vertex index on empty vertex list"));
        }
        let grid = use_grid.then(|| UniformGrid::build(verts));
        Ok(Self { verts, grid })
    }

    pub fn query(&self, p: &Vec3) -> Result<(usize, f64)> {
        match &self.grid {
            None => nearest_vertex_brute_force(self.verts, p),
            Some(g) => Ok(g.query(self.verts, p)),
        }
    }
}

impl UniformGrid {
    fn build(verts: &[Vec3]) -> Self {
        let (lo, hi) = bounds_of(verts);
        let extent = hi - lo;
        let max_extent = extent.max().max(1e-9);
        let target_per_axis = (verts.len() as f64).cbrt().ceil().max(1.0);
        let cell = (max_extent / target_per_axis).max(1e-9);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).max(1));
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; n_cells + 1];
        let cell_of: Vec<usize> = verts
            .iter()
            .map(|v| {
                let c = Self::cell_coords(&lo, cell, &dims, v);
                Self::flat(&dims, c)
            })
            .collect();
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; verts.len()];
        // Ascending vertex order within each bucket.
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        UniformGrid {
            origin: lo,
            cell,
            dims,
            starts: counts,
            items,
        }
    }

    fn cell_coords(origin: &Vec3, cell: f64, dims: &[usize; 3], p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a] - origin[a]) / cell).floor();
            if f < 0.0 {
                0
            } else {
                (f as usize).min(dims[a] - 1)
            }
        })
    }

    fn flat(dims: &[usize; 3], c: [usize; 3]) -> usize {
        (c[2] * dims[1] + c[1]) * dims[0] + c[0]
    }

    fn query(&self, verts: &[Vec3], p: &Vec3) -> (usize, f64) {
        let c = Self::cell_coords(&self.origin, self.cell, &self.dims, p);
        let max_ring = *self.dims.iter().max().unwrap();
        let mut best_i = usize::MAX;
        let mut best_d2 = f64::INFINITY;
        for r in 0..=max_ring {
            let r = r as isize;
            let range = |a: usize| {
                let lo = (c[a] as isize - r).max(0);
                let hi = (c[a] as isize + r).min(self.dims[a] as isize - 1);
                lo..=hi
            };
            for z in range(2) {
                for y in range(1) {
                    for x in range(0) {
                        let cheb = (x - c[0] as isize)
                            .abs()
                            .max((y - c[1] as isize).abs())
                            .max((z - c[2] as isize).abs());
                        if cheb != r {
                            continue;
                        }
                        let f = Self::flat(&self.dims, [x as usize, y as usize, z as usize]);
                        for &i in &self.items[self.starts[f]..self.starts[f + 1]] {
                            let d2 = dist2(&verts[i], p);
                            if d2 < best_d2 || (d2 == best_d2 && i < best_i) {
                                best_d2 = d2;
                                best_i = i;
                            }
                        }
                    }
                }
            }
            // Anything in ring r+1 or beyond is at least r·cell away.
            let bound = r as f64 * self.cell;
            if best_i != usize::MAX && best_d2 < bound * bound * (1.0 - 1e-12) {
                break;
            }
        }
        (best_i, best_d2.sqrt())
    }
}
