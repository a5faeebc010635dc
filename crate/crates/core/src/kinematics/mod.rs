//! Skeletons, pose sequences, forward kinematics and the capsule proxy
//! surface used for per-vertex metrics.
//!
//! Conventions: +z is up, the rest pose faces +x, and the character's left
//! is +y. Offsets are expressed in the parent joint's frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{sixd_to_matrix, Mat3, Rotation6D, Vec3};
use crate::nn::Tensor;

/// Serialized skeleton description. Root parent is `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub names: Vec<String>,
    pub parents: Vec<i64>,
    pub offsets: Vec<[f64; 3]>,
    /// Joints carrying their own local rotation, root first.
    pub rotated: Vec<usize>,
    #[serde(default)]
    pub feet: Vec<usize>,
    pub wrists: [usize; 2],
    /// Capsule radius of the bone ending at each joint (root entry unused).
    pub bone_radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonConfig", into = "SkeletonConfig")]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    rotated: Vec<usize>,
    /// `rotation_slot[j]` is the slot of joint `j` in `rotated`, if any.
    rotation_slot: Vec<Option<usize>>,
    feet: Vec<usize>,
    wrists: [usize; 2],
    bone_radii: Vec<f64>,
}

impl TryFrom<SkeletonConfig> for Skeleton {
    type Error = Error;

    fn try_from(c: SkeletonConfig) -> Result<Self> {
        let j = c.names.len();
        let bad = |m: String| Err(Error::InvalidSkeleton(m));
        if j == 0 {
            return bad("skeleton has no joints".into());
        }
        if c.parents.len() != j || c.offsets.len() != j || c.bone_radii.len() != j {
            return bad(format!(
                "{j} names but {} parents, {} offsets, {} radii",
                c.parents.len(),
                c.offsets.len(),
                c.bone_radii.len()
            ));
        }
        let mut parents = Vec::with_capacity(j);
        for (i, &p) in c.parents.iter().enumerate() {
            if i == 0 {
                if p != -1 {
                    return bad("joint 0 must be the root (parent -1)".into());
                }
                parents.push(None);
            } else if p < 0 || p as usize >= i {
                return bad(format!("joint {i} has parent {p}; parents must precede children and only joint 0 is a root"));
            } else {
                parents.push(Some(p as usize));
            }
        }
        let offsets: Vec<Vec3> = c.offsets.iter().map(|o| Vec3::new(o[0], o[1], o[2])).collect();
        for (i, o) in offsets.iter().enumerate().skip(1) {
            if !(o.norm() > 0.0) || !o.iter().all(|v| v.is_finite()) {
                return bad(format!("joint {i} has a zero-length or non-finite offset"));
            }
        }
        if c.rotated.first() != Some(&0) {
            return bad("the root must be the first rotated joint".into());
        }
        let mut rotation_slot = vec![None; j];
        for (slot, &r) in c.rotated.iter().enumerate() {
            if r >= j {
                return bad(format!("rotated joint {r} out of range"));
            }
            if rotation_slot[r].is_some() {
                return bad(format!("joint {r} listed twice as rotated"));
            }
            rotation_slot[r] = Some(slot);
        }
        for &i in c.feet.iter().chain(c.wrists.iter()) {
            if i >= j {
                return bad(format!("foot/wrist index {i} out of range"));
            }
        }
        if c.bone_radii.iter().skip(1).any(|r| !(*r > 0.0)) {
            return bad("bone radii must be positive".into());
        }
        Ok(Skeleton {
            names: c.names,
            parents,
            offsets,
            rotated: c.rotated,
            rotation_slot,
            feet: c.feet,
            wrists: c.wrists,
            bone_radii: c.bone_radii,
        })
    }
}

impl From<Skeleton> for SkeletonConfig {
    fn from(s: Skeleton) -> Self {
        SkeletonConfig {
            names: s.names,
            parents: s.parents.iter().map(|p| p.map_or(-1, |v| v as i64)).collect(),
            offsets: s.offsets.iter().map(|o| [o.x, o.y, o.z]).collect(),
            rotated: s.rotated,
            feet: s.feet,
            wrists: s.wrists,
            bone_radii: s.bone_radii,
        }
    }
}

fn joint(names: &mut Vec<String>, parents: &mut Vec<i64>, offsets: &mut Vec<[f64; 3]>, radii: &mut Vec<f64>, name: &str, parent: i64, offset: [f64; 3], radius: f64) {
    names.push(name.to_string());
    parents.push(parent);
    offsets.push(offset);
    radii.push(radius);
}

impl Skeleton {
    pub fn from_config(config: SkeletonConfig) -> Result<Self> {
        Self::try_from(config)
    }

    pub fn to_config(&self) -> SkeletonConfig {
        self.clone().into()
    }

    /// 24-joint body with 22 rotated joints (hand end joints carry no
    /// rotation), standing with the feet on z = 0 when the root is at
    /// height [`Skeleton::standing_root_height`].
    pub fn smpl_like() -> Self {
        let (mut n, mut p, mut o, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut add = |name: &str, parent: i64, offset: [f64; 3], radius: f64| joint(&mut n, &mut p, &mut o, &mut r, name, parent, offset, radius);
        add("pelvis", -1, [0.0, 0.0, 0.0], 0.0);
        add("left_hip", 0, [0.0, 0.09, -0.08], 0.08);
        add("right_hip", 0, [0.0, -0.09, -0.08], 0.08);
        add("spine1", 0, [0.0, 0.0, 0.12], 0.11);
        add("left_knee", 1, [0.0, 0.0, -0.40], 0.07);
        add("right_knee", 2, [0.0, 0.0, -0.40], 0.07);
        add("spine2", 3, [0.0, 0.0, 0.13], 0.12);
        add("left_ankle", 4, [0.0, 0.0, -0.40], 0.05);
        add("right_ankle", 5, [0.0, 0.0, -0.40], 0.05);
        add("spine3", 6, [0.0, 0.0, 0.05], 0.12);
        add("left_foot", 7, [0.12, 0.0, -0.05], 0.04);
        add("right_foot", 8, [0.12, 0.0, -0.05], 0.04);
        add("neck", 9, [0.0, 0.0, 0.21], 0.05);
        add("left_collar", 9, [0.0, 0.07, 0.11], 0.05);
        add("right_collar", 9, [0.0, -0.07, 0.11], 0.05);
        add("head", 12, [0.0, 0.0, 0.09], 0.09);
        add("left_shoulder", 13, [0.0, 0.11, 0.03], 0.05);
        add("right_shoulder", 14, [0.0, -0.11, 0.03], 0.05);
        add("left_elbow", 16, [0.0, 0.26, 0.0], 0.045);
        add("right_elbow", 17, [0.0, -0.26, 0.0], 0.045);
        add("left_wrist", 18, [0.0, 0.25, 0.0], 0.035);
        add("right_wrist", 19, [0.0, -0.25, 0.0], 0.035);
        add("left_hand", 20, [0.0, 0.08, 0.0], 0.03);
        add("right_hand", 21, [0.0, -0.08, 0.0], 0.03);
        Skeleton::try_from(SkeletonConfig {
            names: n,
            parents: p,
            offsets: o,
            rotated: (0..22).collect(),
            feet: vec![10, 11],
            wrists: [20, 21],
            bone_radii: r,
        })
        .expect("preset skeleton is valid")
    }

    /// 9-joint upper-body stick figure: root, spine, head and two
    /// shoulder-elbow-wrist chains. Arms hang down in the rest pose.
    /// Rotated joints: root, spine, both shoulders, both elbows.
    pub fn stick9() -> Self {
        let (mut n, mut p, mut o, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut add = |name: &str, parent: i64, offset: [f64; 3], radius: f64| joint(&mut n, &mut p, &mut o, &mut r, name, parent, offset, radius);
        add("root", -1, [0.0, 0.0, 0.0], 0.0);
        add("spine", 0, [0.0, 0.0, 0.45], 0.13);
        add("head", 1, [0.0, 0.0, 0.25], 0.09);
        add("left_shoulder", 1, [0.0, 0.18, 0.0], 0.05);
        add("left_elbow", 3, [0.0, 0.0, -0.28], 0.045);
        add("left_wrist", 4, [0.0, 0.0, -0.26], 0.035);
        add("right_shoulder", 1, [0.0, -0.18, 0.0], 0.05);
        add("right_elbow", 6, [0.0, 0.0, -0.28], 0.045);
        add("right_wrist", 7, [0.0, 0.0, -0.26], 0.035);
        Skeleton::try_from(SkeletonConfig {
            names: n,
            parents: p,
            offsets: o,
            rotated: vec![0, 1, 3, 4, 6, 7],
            feet: Vec::new(),
            wrists: [5, 8],
            bone_radii: r,
        })
        .expect("preset skeleton is valid")
    }

    /// Root height at which the lowest rest-pose joint touches z = 0.
    pub fn standing_root_height(&self) -> f64 {
        let rest = self.rest_positions();
        -rest.iter().map(|p| p.z).fold(0.0, f64::min)
    }

    pub fn num_joints(&self) -> usize {
        self.names.len()
    }

    pub fn num_rotated(&self) -> usize {
        self.rotated.len()
    }

    /// Scalars per frame when flattened: `3 + 6 · J_rot`.
    pub fn pose_dim(&self) -> usize {
        pose_dim(self.rotated.len())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        self.offsets[j]
    }

    pub fn rotated(&self) -> &[usize] {
        &self.rotated
    }

    pub fn feet(&self) -> &[usize] {
        &self.feet
    }

    pub fn wrists(&self) -> [usize; 2] {
        self.wrists
    }

    pub fn bone_radius(&self, j: usize) -> f64 {
        self.bone_radii[j]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Lengths of the upper and lower arm of one side (0 = left, 1 = right).
    pub fn arm_lengths(&self, side: usize) -> (f64, f64) {
        let w = self.wrists[side];
        let e = self.parents[w].expect("wrist has a parent");
        (self.offsets[e].norm(), self.offsets[w].norm())
    }

    /// Joint positions with the root at the origin and identity rotations.
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let rots = vec![Rotation6D::IDENTITY; self.num_rotated()];
        forward_kinematics(self, &Vec3::zeros(), &rots).expect("identity pose is valid")
    }

    fn check_rotations(&self, n: usize) -> Result<()> {
        if n != self.rotated.len() {
            return Err(Error::ShapeMismatch(format!(
                "{n} rotations for a skeleton with {} rotated joints",
                self.rotated.len()
            )));
        }
        Ok(())
    }
}

pub fn pose_dim(num_rotated: usize) -> usize {
    3 + 6 * num_rotated
}

/// Global joint positions and rotations.
pub fn forward_kinematics_full(skel: &Skeleton, root: &Vec3, rotations: &[Rotation6D]) -> Result<(Vec<Vec3>, Vec<Mat3>)> {
    skel.check_rotations(rotations.len())?;
    let j = skel.num_joints();
    let mut pos = Vec::with_capacity(j);
    let mut rot: Vec<Mat3> = Vec::with_capacity(j);
    for i in 0..j {
        let local = match skel.rotation_slot[i] {
            Some(s) => Some(sixd_to_matrix(&rotations[s])?),
            None => None,
        };
        match skel.parents[i] {
            None => {
                pos.push(*root);
                rot.push(local.unwrap_or_else(Mat3::identity));
            }
            Some(p) => {
                pos.push(pos[p] + rot[p] * skel.offsets[i]);
                rot.push(match local {
                    Some(l) => rot[p] * l,
                    None => rot[p],
                });
            }
        }
    }
    Ok((pos, rot))
}

pub fn forward_kinematics(skel: &Skeleton, root: &Vec3, rotations: &[Rotation6D]) -> Result<Vec<Vec3>> {
    Ok(forward_kinematics_full(skel, root, rotations)?.0)
}

/// Poses over time with cached global joint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub root_translation: Vec<Vec3>,
    pub rotations: Vec<Vec<Rotation6D>>,
    positions: Vec<Vec<Vec3>>,
}

impl PoseSequence {
    pub fn new(skel: &Skeleton, root_translation: Vec<Vec3>, rotations: Vec<Vec<Rotation6D>>) -> Result<Self> {
        if root_translation.len() != rotations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} root translations for {} rotation frames",
                root_translation.len(),
                rotations.len()
            )));
        }
        let positions = root_translation
            .iter()
            .zip(&rotations)
            .map(|(r, q)| forward_kinematics(skel, r, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root_translation,
            rotations,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.root_translation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root_translation.is_empty()
    }

    /// Global joint positions of every frame.
    pub fn positions(&self) -> &[Vec<Vec3>] {
        &self.positions
    }

    pub fn wrist_positions(&self, skel: &Skeleton, t: usize) -> [Vec3; 2] {
        let [l, r] = skel.wrists();
        [self.positions[t][l], self.positions[t][r]]
    }

    /// Left and right wrist per frame, flattened `T × 6`.
    pub fn hand_trajectory(&self, skel: &Skeleton) -> Tensor {
        let [l, r] = skel.wrists();
        Tensor::from_fn(self.len(), 6, |t, c| {
            let p = if c < 3 { self.positions[t][l] } else { self.positions[t][r] };
            p[c % 3]
        })
    }

    /// `T × D` with columns `[root x, y, z, slot0 r0..r5, slot1 r0..r5, ...]`.
    pub fn flatten(&self) -> Tensor {
        let d = pose_dim(self.rotations.first().map_or(0, Vec::len));
        let mut out = Tensor::zeros(self.len(), d);
        for t in 0..self.len() {
            let row = out.row_mut(t);
            row[..3].copy_from_slice(self.root_translation[t].as_slice());
            for (s, r) in self.rotations[t].iter().enumerate() {
                row[3 + 6 * s..9 + 6 * s].copy_from_slice(&r.0);
            }
        }
        out
    }

    pub fn unflatten(skel: &Skeleton, flat: &Tensor) -> Result<Self> {
        if flat.cols() != skel.pose_dim() {
            return Err(Error::ShapeMismatch(format!(
                "pose rows have {} values, skeleton needs {}",
                flat.cols(),
                skel.pose_dim()
            )));
        }
        let mut roots = Vec::with_capacity(flat.rows());
        let mut rots = Vec::with_capacity(flat.rows());
        for t in 0..flat.rows() {
            let row = flat.row(t);
            roots.push(Vec3::new(row[0], row[1], row[2]));
            rots.push(row[3..].chunks_exact(6).map(Rotation6D::from_slice).collect::<Result<Vec<_>>>()?);
        }
        Self::new(skel, roots, rots)
    }
}

pub fn flatten_pose(seq: &PoseSequence) -> Tensor {
    seq.flatten()
}

pub fn unflatten_pose(skel: &Skeleton, flat: &Tensor) -> Result<PoseSequence> {
    PoseSequence::unflatten(skel, flat)
}

/// Rings × points-around sampled on every bone's capsule side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub rings: usize,
    pub around: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { rings: 4, around: 8 }
    }
}

/// Surface points rigidly attached to bones, stored in the frame of the
/// bone's parent joint.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySurface {
    /// `(parent joint, local point)` pairs.
    pub points: Vec<(usize, Vec3)>,
}

impl ProxySurface {
    pub fn new(skel: &Skeleton, config: ProxyConfig) -> Self {
        let mut points = Vec::new();
        for j in 0..skel.num_joints() {
            let Some(p) = skel.parent(j) else { continue };
            let bone = skel.offset(j);
            let dir = bone.normalize();
            let helper = if dir.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let u = dir.cross(&helper).normalize();
            let v = dir.cross(&u);
            let radius = skel.bone_radius(j);
            for k in 0..config.rings {
                let along = bone * ((k as f64 + 0.5) / config.rings as f64);
                for m in 0..config.around {
                    let th = 2.0 * std::f64::consts::PI * m as f64 / config.around as f64;
                    points.push((p, along + (u * th.cos() + v * th.sin()) * radius));
                }
            }
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// World positions of the proxy points for one frame.
    pub fn sample(&self, skel: &Skeleton, root: &Vec3, rotations: &[Rotation6D]) -> Result<Vec<Vec3>> {
        let (pos, rot) = forward_kinematics_full(skel, root, rotations)?;
        Ok(self.points.iter().map(|(j, local)| pos[*j] + rot[*j] * local).collect())
    }
}

pub fn sample_proxy_surface(skel: &Skeleton, config: ProxyConfig, root: &Vec3, rotations: &[Rotation6D]) -> Result<Vec<Vec3>> {
    ProxySurface::new(skel, config).sample(skel, root, rotations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{axis_angle, matrix_to_sixd, rot_z};
    use proptest::prelude::*;

    fn two_bone() -> Skeleton {
        Skeleton::from_config(SkeletonConfig {
            names: vec!["a".into(), "b".into()],
            parents: vec![-1, 0],
            offsets: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            rotated: vec![0],
            feet: vec![],
            wrists: [1, 1],
            bone_radii: vec![0.0, 0.1],
        })
        .unwrap()
    }

    #[test]
    fn preset_dimensions() {
        let s = Skeleton::smpl_like();
        assert_eq!((s.num_joints(), s.num_rotated(), s.pose_dim()), (24, 22, 135));
        let d = Skeleton::stick9();
        assert_eq!((d.num_joints(), d.num_rotated(), d.pose_dim()), (9, 6, 39));
        assert_eq!(pose_dim(4), 27);
        assert!((s.standing_root_height() - 0.93).abs() < 1e-12);
    }

    #[test]
    fn parent_rotation_moves_child() {
        let s = two_bone();
        let r = matrix_to_sixd(&rot_z(std::f64::consts::FRAC_PI_2)).unwrap();
        let p = forward_kinematics(&s, &Vec3::new(1.0, 2.0, 3.0), &[r]).unwrap();
        assert!((p[1] - Vec3::new(1.0, 3.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn identity_pose_accumulates_offsets() {
        let s = Skeleton::stick9();
        let root = Vec3::new(0.5, -0.2, 0.9);
        let p = forward_kinematics(&s, &root, &vec![Rotation6D::IDENTITY; 6]).unwrap();
        assert!((p[5] - (root + Vec3::new(0.0, 0.18, 0.45 - 0.54))).norm() < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = two_bone().to_config();
        c.parents = vec![-1, 1];
        assert!(Skeleton::from_config(c).is_err());
        let mut c = two_bone().to_config();
        c.parents = vec![-1, -1];
        assert!(Skeleton::from_config(c).is_err());
        let mut c = two_bone().to_config();
        c.wrists = [0, 5];
        assert!(Skeleton::from_config(c).is_err());
        let mut c = two_bone().to_config();
        c.rotated = vec![1];
        assert!(Skeleton::from_config(c).is_err());
    }

    #[test]
    fn config_round_trip_through_json() {
        let s = Skeleton::smpl_like();
        let json = serde_json::to_string(&s).unwrap();
        let back: Skeleton = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn wrong_rotation_count_errors() {
        let s = Skeleton::stick9();
        assert!(forward_kinematics(&s, &Vec3::zeros(), &[Rotation6D::IDENTITY; 5]).is_err());
        assert!(PoseSequence::unflatten(&s, &Tensor::zeros(2, 27)).is_err());
    }

    #[test]
    fn proxy_counts_and_determinism() {
        let s = Skeleton::stick9();
        let surf = ProxySurface::new(&s, ProxyConfig::default());
        assert_eq!(surf.len(), 8 * 4 * 8);
        assert_eq!(ProxySurface::new(&Skeleton::smpl_like(), ProxyConfig::default()).len(), 23 * 32);
        let rots = vec![Rotation6D::IDENTITY; 6];
        let a = surf.sample(&s, &Vec3::zeros(), &rots).unwrap();
        let b = surf.sample(&s, &Vec3::zeros(), &rots).unwrap();
        assert_eq!(a, b);
        let shift = Vec3::new(0.3, -1.0, 2.0);
        let c = surf.sample(&s, &shift, &rots).unwrap();
        for (p, q) in a.iter().zip(&c) {
            assert!((q - p - shift).norm() < 1e-12);
        }
    }

    #[test]
    fn proxy_points_sit_at_bone_radius() {
        let s = Skeleton::stick9();
        let surf = ProxySurface::new(&s, ProxyConfig::default());
        let rest = s.rest_positions();
        let pts = surf.sample(&s, &Vec3::zeros(), &[Rotation6D::IDENTITY; 6]).unwrap();
        // Left upper arm (shoulder → elbow) is vertical at rest.
        let start = 3 * 32; // bones in joint order: spine, head, l_shoulder, l_elbow...
        for p in &pts[start..start + 32] {
            let d = Vec3::new(p.x - rest[3].x, p.y - rest[3].y, 0.0).norm();
            assert!((d - 0.045).abs() < 1e-12);
        }
    }

    fn arb_rot() -> impl Strategy<Value = Mat3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0).prop_filter_map("axis", |(x, y, z, a)| {
            let axis = Vec3::new(x, y, z);
            (axis.norm() > 0.1).then(|| axis_angle(&axis.normalize(), a))
        })
    }

    proptest! {
        #[test]
        fn flatten_round_trip(raw in proptest::collection::vec(-1.0f64..1.0, 3 * 39)) {
            let s = Skeleton::stick9();
            // Make every 6D block well-conditioned by adding the identity.
            let flat = Tensor::from_fn(3, 39, |t, c| {
                let v = raw[t * 39 + c];
                if c >= 3 && ((c - 3) % 6 == 0 || (c - 3) % 6 == 4) { v + 3.0 } else { v }
            });
            let seq = PoseSequence::unflatten(&s, &flat).unwrap();
            prop_assert_eq!(seq.flatten(), flat);
            let again = PoseSequence::unflatten(&s, &seq.flatten()).unwrap();
            prop_assert_eq!(again, seq);
        }

        #[test]
        fn fk_rigid_equivariance(rot in arb_rot(), local in arb_rot(), t in proptest::array::uniform3(-2.0f64..2.0)) {
            let s = Skeleton::smpl_like();
            let mut rots = vec![Rotation6D::IDENTITY; 22];
            rots[0] = matrix_to_sixd(&local).unwrap();
            rots[16] = matrix_to_sixd(&local.transpose()).unwrap();
            let root = Vec3::new(0.1, 0.2, 0.9);
            let base = forward_kinematics(&s, &root, &rots).unwrap();
            let shift = Vec3::new(t[0], t[1], t[2]);
            let mut moved = rots.clone();
            moved[0] = matrix_to_sixd(&(rot * local)).unwrap();
            let out = forward_kinematics(&s, &(rot * root + shift), &moved).unwrap();
            for (a, b) in base.iter().zip(&out) {
                prop_assert!((rot * a + shift - b).norm() < 1e-9);
            }
        }
    }
}
