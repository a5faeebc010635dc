use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::Vec3;

use super::Mesh;

/// Signed distance in meters: negative inside, positive outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdfField {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half_extents: Vec3 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
    Grid(SdfGrid),
}

impl SdfField {
    pub fn validate(&self) -> Result<()> {
        match self {
            SdfField::Sphere { radius, .. } | SdfField::Capsule { radius, .. } if !(*radius > 0.0) => {
                Err(Error::MalformedGrid(format!("radius must be positive, got {radius}")))
            }
            SdfField::Box { half_extents, .. } if half_extents.iter().any(|h| !(*h > 0.0)) => {
                Err(Error::MalformedGrid("box half extents must be positive".into()))
            }
            SdfField::Grid(g) => g.validate(),
            _ => Ok(()),
        }
    }

    pub fn query(&self, p: &Vec3) -> f64 {
        match self {
            SdfField::Sphere { center, radius } => (p - center).norm() - radius,
            SdfField::Box { center, half_extents } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.sup(&Vec3::zeros()).norm();
                outside + q.max().min(0.0)
            }
            SdfField::Capsule { a, b, radius } => {
                let ab = b - a;
                let denom = ab.norm_squared();
                let t = if denom > 0.0 { ((p - a).dot(&ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
                (p - (a + ab * t)).norm() - radius
            }
            SdfField::Grid(g) => g.query(p),
        }
    }
}

/// Regular grid of signed distances sampled at `origin + spacing · (i, j, k)`,
/// x fastest. Queries inside the bounds are trilinear; queries outside are
/// clamped to the bounds and the Euclidean distance to the bounds is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::MalformedGrid(format!("every axis needs >= 2 samples, got {:?}", self.dims)));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::MalformedGrid(format!("spacing must be positive, got {}", self.spacing)));
        }
        let n = self.dims[0] * self.dims[1] * self.dims[2];
        if self.values.len() != n {
            return Err(Error::MalformedGrid(format!("{} values for {n} samples", self.values.len())));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedGrid("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn upper(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                (self.dims[0] - 1) as f64,
                (self.dims[1] - 1) as f64,
                (self.dims[2] - 1) as f64,
            ) * self.spacing
    }

    /// Samples `sdf` on a grid covering `[lo, hi]` with `resolution` samples
    /// along the longest axis.
    pub fn from_fn(lo: Vec3, hi: Vec3, resolution: usize, sdf: impl Fn(&Vec3) -> f64 + Sync) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::MalformedGrid("resolution must be >= 2".into()));
        }
        let extent = hi - lo;
        let spacing = extent.max() / (resolution - 1) as f64;
        if !(spacing > 0.0) {
            return Err(Error::MalformedGrid("empty grid bounds".into()));
        }
        let dims = [0, 1, 2].map(|a| ((extent[a] / spacing - 1e-9).ceil() as usize + 1).max(2));
        let plane = dims[0] * dims[1];
        let values: Vec<f64> = (0..dims[2])
            .into_par_iter()
            .flat_map_iter(|k| {
                let sdf = &sdf;
                (0..plane).map(move |ij| {
                    let i = ij % dims[0];
                    let j = ij / dims[0];
                    let p = lo + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    sdf(&p)
                })
            })
            .collect();
        let grid = SdfGrid {
            dims,
            origin: lo,
            spacing,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Bakes a closed triangle mesh: exact point-triangle distance for the
    /// magnitude, generalized winding number for the sign.
    pub fn bake(mesh: &Mesh, resolution: usize, margin: f64) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::InvalidMesh("cannot bake an SDF from a mesh without faces".into()));
        }
        let (lo, hi) = mesh.bounds();
        let pad = Vec3::repeat(margin.max(0.0));
        let tris: Vec<[Vec3; 3]> = mesh
            .faces
            .iter()
            .map(|f| [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]])
            .collect();
        Self::from_fn(lo - pad, hi + pad, resolution, |p| mesh_signed_distance(&tris, p))
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.dims[1] + j) * self.dims[0] + i]
    }

    pub fn query(&self, p: &Vec3) -> f64 {
        let hi = self.upper();
        let clamped = p.sup(&self.origin).inf(&hi);
        let outside = (p - clamped).norm();
        let local = (clamped - self.origin) / self.spacing;
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let max_cell = self.dims[a] - 2;
            let f = local[a].floor().max(0.0);
            let c = (f as usize).min(max_cell);
            idx[a] = c;
            frac[a] = (local[a] - c as f64).clamp(0.0, 1.0);
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let c00 = self.at(i, j, k) * (1.0 - fx) + self.at(i + 1, j, k) * fx;
        let c10 = self.at(i, j + 1, k) * (1.0 - fx) + self.at(i + 1, j + 1, k) * fx;
        let c01 = self.at(i, j, k + 1) * (1.0 - fx) + self.at(i + 1, j, k + 1) * fx;
        let c11 = self.at(i, j + 1, k + 1) * (1.0 - fx) + self.at(i + 1, j + 1, k + 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz + outside
    }
}

fn mesh_signed_distance(tris: &[[Vec3; 3]], p: &Vec3) -> f64 {
    let mut d2 = f64::INFINITY;
    let mut solid = 0.0;
    for [a, b, c] in tris {
        d2 = d2.min(point_triangle_distance_sq(p, a, b, c));
        solid += solid_angle(p, a, b, c);
    }
    let d = d2.sqrt();
    if solid / (4.0 * std::f64::consts::PI) > 0.5 {
        -d
    } else {
        d
    }
}

/// Generalized winding number of a closed triangle soup around `p`
/// (≈1 inside, ≈0 outside; overlapping closed parts add up).
pub fn winding_number(mesh: &Mesh, p: &Vec3) -> f64 {
    let total: f64 = mesh
        .faces
        .iter()
        .map(|f| solid_angle(p, &mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]))
        .sum();
    total / (4.0 * std::f64::consts::PI)
}

fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let a = a - p;
    let b = b - p;
    let c = c - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den)
}

pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    point_triangle_distance_sq(p, a, b, c).sqrt()
}

/// Closest-point-on-triangle by Voronoi region classification.
fn point_triangle_distance_sq(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm_squared()
}
