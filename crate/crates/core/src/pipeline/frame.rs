//! Ground-plane reference frames used to canonicalize stage inputs.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{transform_mesh, ObjectSequence};
use crate::mathcore::{rot_z, Mat3, RigidTransform, Vec3};

use super::HandTrajectory;

/// A horizontal translation plus a heading about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarFrame {
    pub origin: [f64; 2],
    pub yaw: f64,
}

impl PlanarFrame {
    pub const IDENTITY: PlanarFrame = PlanarFrame {
        origin: [0.0, 0.0],
        yaw: 0.0,
    };

    pub fn rotation(&self) -> Mat3 {
        rot_z(self.yaw)
    }

    fn origin3(&self) -> Vec3 {
        Vec3::new(self.origin[0], self.origin[1], 0.0)
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        rot_z(-self.yaw) * (p - self.origin3())
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        rot_z(self.yaw) * p + self.origin3()
    }

    /// Rigid map from world to frame coordinates.
    pub fn world_to_local(&self) -> RigidTransform {
        RigidTransform::new(rot_z(self.yaw), self.origin3()).inverse()
    }

    /// Object centroid at frame 0, heading along the object's local +x
    /// axis (its local +y when +x is vertical).
    pub fn of_object(seq: &ObjectSequence) -> Result<Self> {
        let verts = transform_mesh(seq, 0)?;
        let c = verts.iter().sum::<Vec3>() / verts.len() as f64;
        let r = seq.transform(0)?.rotation;
        let x = r.column(0);
        let yaw = if x.x.hypot(x.y) > 1e-9 {
            x.y.atan2(x.x)
        } else {
            let y = r.column(1);
            y.y.atan2(y.x) - FRAC_PI_2
        };
        Ok(Self { origin: [c.x, c.y], yaw })
    }

    /// Wrist midpoint, heading chosen so that the right-to-left wrist
    /// direction maps to +y.
    pub fn of_wrists(left: &Vec3, right: &Vec3) -> Self {
        let mid = 0.5 * (left + right);
        let lat = left - right;
        let yaw = if lat.x.hypot(lat.y) > 1e-9 {
            lat.y.atan2(lat.x) - FRAC_PI_2
        } else {
            0.0
        };
        Self {
            origin: [mid.x, mid.y],
            yaw,
        }
    }

    /// The same motion expressed in frame coordinates.
    pub fn object_to_local(&self, seq: &ObjectSequence) -> Result<ObjectSequence> {
        let w2l = self.world_to_local();
        let transforms = seq.transforms.iter().map(|t| w2l.compose(t)).collect();
        ObjectSequence::new(seq.mesh.clone(), transforms, seq.fps)
    }

    pub fn hands_to_local(&self, hands: &HandTrajectory) -> HandTrajectory {
        hands.map(|p| self.to_local(p))
    }

    pub fn hands_to_world(&self, hands: &HandTrajectory) -> HandTrajectory {
        hands.map(|p| self.to_world(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::box_mesh;

    #[test]
    fn round_trip_and_heading() {
        let f = PlanarFrame {
            origin: [1.0, -2.0],
            yaw: 0.7,
        };
        let p = Vec3::new(0.3, 0.4, 1.1);
        assert!((f.to_world(&f.to_local(&p)) - p).norm() < 1e-12);
        assert!((f.world_to_local().apply(&p) - f.to_local(&p)).norm() < 1e-12);

        let w = PlanarFrame::of_wrists(&Vec3::new(1.0, 1.0, 0.9), &Vec3::new(1.0, 0.6, 0.8));
        assert!(w.yaw.abs() < 1e-12);
        let w = PlanarFrame::of_wrists(&Vec3::new(-1.0, 0.0, 0.9), &Vec3::new(0.0, 0.0, 0.9));
        let lat = w.to_local(&Vec3::new(-1.0, 0.0, 0.9)) - w.to_local(&Vec3::new(0.0, 0.0, 0.9));
        assert!((lat.normalize() - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn object_frame_cancels_start_pose() {
        let mesh = box_mesh("b", Vec3::new(0.4, 0.2, 0.3), 0.1).unwrap();
        let make = |yaw: f64, at: Vec3| {
            let ts = (0..3)
                .map(|t| RigidTransform::new(rot_z(yaw + 0.1 * t as f64), at + Vec3::new(0.0, 0.0, 0.05 * t as f64)))
                .collect();
            ObjectSequence::new(mesh.clone(), ts, 30.0).unwrap()
        };
        let a = make(0.3, Vec3::new(1.0, 2.0, 0.4));
        let b = make(-2.0, Vec3::new(-3.0, 0.5, 0.4));
        let la = PlanarFrame::of_object(&a).unwrap().object_to_local(&a).unwrap();
        let lb = PlanarFrame::of_object(&b).unwrap().object_to_local(&b).unwrap();
        for t in 0..3 {
            let (va, vb) = (transform_mesh(&la, t).unwrap(), transform_mesh(&lb, t).unwrap());
            assert!(va.iter().zip(&vb).all(|(p, q)| (p - q).norm() < 1e-12));
        }
    }
}
