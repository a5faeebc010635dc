//! Object meshes, per-frame rigid transforms, basis-point-set encoding,
//! nearest-vertex queries and signed distance fields.

mod bps;
mod nearest;
pub mod obj;
pub mod primitives;
mod sdf;
pub mod trajectory;

pub use bps::{compute_bps, BpsBasis, BpsFeature, DEFAULT_BPS_POINTS};
pub use nearest::{nearest_vertex, nearest_vertex_brute_force, NearestVertexIndex, GRID_THRESHOLD};
pub use sdf::{point_triangle_distance, winding_number, SdfField, SdfGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(name: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Mesh {
            name: name.into(),
            vertices,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if let Some(i) = self.vertices.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let k = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= k)) {
            return Err(Error::InvalidMesh(format!("face {f:?} references a vertex >= {k}")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds_of(&self.vertices)
    }
}

pub(crate) fn bounds_of(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// A rigid object moving through `T` frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSequence {
    pub mesh: Mesh,
    pub transforms: Vec<RigidTransform>,
    pub fps: f64,
}

impl ObjectSequence {
    pub fn new(mesh: Mesh, transforms: Vec<RigidTransform>, fps: f64) -> Result<Self> {
        let seq = ObjectSequence { mesh, transforms, fps };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        if self.transforms.is_empty() {
            return Err(Error::Empty("object sequence has no frames"));
        }
        for (t, tr) in self.transforms.iter().enumerate() {
            tr.validate()?;
            if (tr.scale - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMesh(format!("frame {t} transform is not rigid (scale {})", tr.scale)));
            }
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn transform(&self, t: usize) -> Result<&RigidTransform> {
        self.transforms.get(t).ok_or(Error::IndexOutOfRange {
            index: t,
            len: self.transforms.len(),
        })
    }

    pub fn vertex_at(&self, t: usize, i: usize) -> Result<Vec3> {
        let tr = self.transform(t)?;
        let v = self.mesh.vertices.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.mesh.vertices.len(),
        })?;
        Ok(tr.apply(v))
    }
}

/// World-space vertices of frame `t`: `R_t · rest + translation_t`.
pub fn transform_mesh(seq: &ObjectSequence, t: usize) -> Result<Vec<Vec3>> {
    let tr = seq.transform(t)?;
    Ok(seq.mesh.vertices.iter().map(|v| tr.apply(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::rot_z;

    fn unit_tri() -> Mesh {
        Mesh::new(
            "tri",
            vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn identity_keeps_rest_vertices() {
        let seq = ObjectSequence::new(unit_tri(), vec![RigidTransform::identity()], 30.0).unwrap();
        assert_eq!(transform_mesh(&seq, 0).unwrap(), seq.mesh.vertices);
    }

    #[test]
    fn translation_shifts_vertices() {
        let tr = RigidTransform::new(crate::mathcore::Mat3::identity(), Vec3::new(1.0, 0.0, 0.0));
        let seq = ObjectSequence::new(unit_tri(), vec![tr], 30.0).unwrap();
        let v = transform_mesh(&seq, 0).unwrap();
        for (a, b) in v.iter().zip(&seq.mesh.vertices) {
            assert_eq!(a - b, Vec3::new(1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn rz90_maps_x_to_y() {
        let tr = RigidTransform::new(rot_z(std::f64::consts::FRAC_PI_2), Vec3::zeros());
        let seq = ObjectSequence::new(unit_tri(), vec![tr], 30.0).unwrap();
        let v = transform_mesh(&seq, 0).unwrap();
        assert!((v[0] - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn frame_out_of_range() {
        let seq = ObjectSequence::new(unit_tri(), vec![RigidTransform::identity()], 30.0).unwrap();
        assert!(matches!(transform_mesh(&seq, 1), Err(Error::IndexOutOfRange { index: 1, len: 1 })));
    }

    #[test]
    fn invalid_meshes_rejected() {
        assert!(Mesh::new("e", vec![], vec![]).is_err());
        assert!(Mesh::new("f", vec![Vec3::zeros()], vec![[0, 0, 1]]).is_err());
        assert!(Mesh::new("n", vec![Vec3::new(f64::NAN, 0.0, 0.0)], vec![]).is_err());
    }
}
