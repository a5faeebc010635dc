//! Procedural manipulation scenarios standing in for captured data.
//!
//! A scenario places a primitive object on a platform (or the floor), moves
//! it along one of four trajectory families with smoothstep timing, and
//! poses an upper body whose wrists sit exactly on grasp vertices while in
//! contact. Each sequence has three phases: approach (hands travel from a
//! relaxed rest pose to the grasp points), contact (object moves, body
//! follows in the object's yaw frame) and retreat.

mod corpus;
pub mod ik;
mod markers;

pub use corpus::{
    build_corpus, generate_corpus, generate_record, load_corpus, read_manifest, Corpus, CorpusConfig, DatasetRecord, Manifest, ManifestEntry, Split,
    SplitScheme,
    MANIFEST_SCHEMA, MANIFEST_VERSION,
};
pub use markers::{solve_object_pose_from_markers, MarkerSolve, SCALE_WARN_TOLERANCE};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::primitives::{box_mesh, cylinder_mesh, lamp_mesh};
use crate::geometry::{nearest_vertex, Mesh, ObjectSequence};
use crate::kinematics::{forward_kinematics_full, PoseSequence, Skeleton};
use crate::mathcore::{matrix_to_sixd, rot_y, rot_z, smoothstep, Mat3, RigidTransform, Rotation6D, Vec3};
use crate::pipeline::{Hand, HandTrajectory};

use ik::{arm_rotations, solve_two_bone};

/// Fraction of the sequence spent approaching before first contact.
pub const APPROACH_FRACTION: f64 = 0.2;
/// Fraction of the sequence spent retreating after release.
pub const RETREAT_FRACTION: f64 = 0.13;
/// Fraction of full arm length allowed for any IK target.
pub const REACH_LIMIT: f64 = 0.98;
pub const MAX_RETRIES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lift,
    Drag,
    Push,
    RotateInPlace,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Lift, Family::Drag, Family::Push, Family::RotateInPlace];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lift => "lift",
            Family::Drag => "drag",
            Family::Push => "push",
            Family::RotateInPlace => "rotate_in_place",
        }
    }
}

/// Object shape and dimensions in meters. Local frames have the origin at
/// the bottom centre and +x pointing away from the person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box {
        size: [f64; 3],
    },
    Cylinder {
        radius: f64,
        height: f64,
    },
    Lamp {
        base_radius: f64,
        pole_radius: f64,
        pole_height: f64,
        shade_radius: f64,
    },
}

impl Primitive {
    pub fn kind(&self) -> &'static str {
        match self {
            Primitive::Box { .. } => "box",
            Primitive::Cylinder { .. } => "cylinder",
            Primitive::Lamp { .. } => "lamp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match self {
            Primitive::Box { size } => size.to_vec(),
            Primitive::Cylinder { radius, height } => vec![*radius, *height],
            Primitive::Lamp {
                base_radius,
                pole_radius,
                pole_height,
                shade_radius,
            } => vec![*base_radius, *pole_radius, *pole_height, *shade_radius],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("{} dimensions must be positive: {dims:?}", self.kind())))
        }
    }

    pub fn mesh(&self, spacing: f64) -> Result<Mesh> {
        self.validate()?;
        match self {
            Primitive::Box { size } => box_mesh("box", Vec3::from(*size), spacing),
            Primitive::Cylinder { radius, height } => cylinder_mesh("cylinder", *radius, *height, 0.0, spacing),
            Primitive::Lamp {
                base_radius,
                pole_radius,
                pole_height,
                shade_radius,
            } => lamp_mesh("lamp", *base_radius, *pole_radius, *pole_height, *shade_radius, spacing),
        }
    }

    /// Distance from the vertical axis to the face nearest the person.
    fn front_extent(&self) -> f64 {
        match self {
            Primitive::Box { size } => 0.5 * size[0],
            Primitive::Cylinder { radius, .. } => *radius,
            Primitive::Lamp { pole_radius, .. } => *pole_radius,
        }
    }

    /// Ideal grasp locations (object-local) for the left and right hand.
    fn grasp_targets(&self, hands: HandChoice) -> [Option<Vec3>; 2] {
        let (two, one) = match self {
            Primitive::Box { size } => (
                [
                    Vec3::new(0.08 - 0.5 * size[0], 0.5 * size[1], 0.5 * size[2]),
                    Vec3::new(0.08 - 0.5 * size[0], -0.5 * size[1], 0.5 * size[2]),
                ],
                Vec3::new(0.08 - 0.5 * size[0], 0.0, size[2]),
            ),
            Primitive::Cylinder { radius, height } => (
                [
                    Vec3::new(-radius * FRAC_1_SQRT_2, radius * FRAC_1_SQRT_2, 0.5 * height),
                    Vec3::new(-radius * FRAC_1_SQRT_2, -radius * FRAC_1_SQRT_2, 0.5 * height),
                ],
                Vec3::new(-0.5 * radius, 0.0, *height),
            ),
            Primitive::Lamp {
                pole_radius, pole_height, ..
            } => (
                [
                    Vec3::new(-pole_radius, 0.0, 0.85 * pole_height),
                    Vec3::new(-pole_radius, 0.0, 0.65 * pole_height),
                ],
                Vec3::new(-pole_radius, 0.0, 0.75 * pole_height),
            ),
        };
        match hands {
            HandChoice::Two => [Some(two[0]), Some(two[1])],
            HandChoice::One(Hand::Left) => [Some(one), None],
            HandChoice::One(Hand::Right) => [None, Some(one)],
        }
    }

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.random_range(0..3) {
            0 => Primitive::Box {
                size: [rng.random_range(0.3..0.5), rng.random_range(0.25..0.4), rng.random_range(0.2..0.4)],
            },
            1 => Primitive::Cylinder {
                radius: rng.random_range(0.1..0.18),
                height: rng.random_range(0.3..0.5),
            },
            _ => Primitive::Lamp {
                base_radius: 0.15,
                pole_radius: 0.02,
                pole_height: rng.random_range(1.0..1.3),
                shade_radius: 0.15,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandChoice {
    Two,
    One(Hand),
}

/// Per-subject body habits, fixed across that subject's sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    /// Horizontal gap between the object's front face and the root.
    pub stance: f64,
    pub height_bias: f64,
    /// Forward spine pitch, radians.
    pub lean: f64,
    /// Sideways component of the elbow pole vector.
    pub elbow_out: f64,
}

impl SubjectStyle {
    const SALT: u64 = 0x5b1e_c7a1_d0c0_ffee;

    pub fn for_subject(corpus_seed: u64, subject: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed ^ Self::SALT);
        rng.set_stream(subject as u64);
        Self {
            stance: rng.random_range(0.2..0.3),
            height_bias: rng.random_range(-0.06..0.06),
            lean: rng.random_range(0.0..0.3),
            elbow_out: rng.random_range(0.4..1.0),
        }
    }
}

/// Everything needed to generate one sequence deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub primitive: Primitive,
    pub family: Family,
    pub hands: HandChoice,
    pub frames: usize,
    pub fps: f64,
    /// Mesh vertex spacing, meters.
    pub spacing: f64,
    /// Lift height or slide distance (m), or yaw change (rad).
    pub magnitude: f64,
    pub start_xy: [f64; 2],
    pub yaw: f64,
    /// Height of the surface the object rests on.
    pub platform: f64,
    pub walk_in: f64,
    pub step_back: f64,
    pub style: SubjectStyle,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.primitive.validate()?;
        if self.frames < 2 {
            return Err(Error::Config(format!("scenario needs at least 2 frames, got {}", self.frames)));
        }
        if !(self.fps > 0.0 && self.spacing > 0.0) {
            return Err(Error::Config("fps and mesh spacing must be positive".into()));
        }
        let vals = [self.magnitude, self.start_xy[0], self.start_xy[1], self.yaw, self.platform, self.walk_in, self.step_back];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scenario parameters".into()));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(family: Family, style: SubjectStyle, frames: usize, fps: f64, spacing: f64, rng: &mut R) -> Self {
        let primitive = Primitive::draw(rng);
        let hands = if rng.random_bool(0.6) {
            HandChoice::Two
        } else if rng.random_bool(0.5) {
            HandChoice::One(Hand::Left)
        } else {
            HandChoice::One(Hand::Right)
        };
        let magnitude = match family {
            Family::Lift => rng.random_range(0.1..0.3),
            Family::Drag | Family::Push => rng.random_range(0.2..0.5),
            Family::RotateInPlace => {
                let a = rng.random_range(0.5..1.4);
                if rng.random_bool(0.5) {
                    a
                } else {
                    -a
                }
            }
        };
        let platform = match primitive {
            Primitive::Lamp { .. } => 0.0,
            _ => rng.random_range(0.3..0.6),
        };
        Self {
            primitive,
            family,
            hands,
            frames,
            fps,
            spacing,
            magnitude,
            start_xy: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
            yaw: rng.random_range(-PI..PI),
            platform,
            walk_in: rng.random_range(0.0..0.2),
            step_back: rng.random_range(0.0..0.2),
            style,
        }
    }

    /// First and last contact frames.
    pub fn contact_window(&self) -> (usize, usize) {
        let t = self.frames;
        let ts = ((APPROACH_FRACTION * t as f64).round() as usize).min(t - 1);
        let retreat = (RETREAT_FRACTION * t as f64).round() as usize;
        let te = (t - 1).saturating_sub(retreat).max(ts);
        (ts, te)
    }

    /// Object translation and yaw at frame `t`.
    fn object_pose(&self, t: usize) -> (Vec3, f64) {
        let (ts, te) = self.contact_window();
        let u = if te > ts {
            smoothstep((t as f64 - ts as f64) / (te - ts) as f64)
        } else {
            0.0
        };
        let p0 = Vec3::new(self.start_xy[0], self.start_xy[1], self.platform);
        let forward = rot_z(self.yaw) * Vec3::x();
        match self.family {
            Family::Lift => (p0 + Vec3::z() * (self.magnitude * u), self.yaw),
            Family::Drag => (p0 - forward * (self.magnitude * u), self.yaw),
            Family::Push => (p0 + forward * (self.magnitude * u), self.yaw),
            Family::RotateInPlace => (p0, self.yaw + self.magnitude * u),
        }
    }

    pub fn object_transform(&self, t: usize) -> RigidTransform {
        let (p, yaw) = self.object_pose(t);
        RigidTransform::new(rot_z(yaw), p)
    }
}

/// Generated geometry and motion of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub object: ObjectSequence,
    pub poses: PoseSequence,
    pub hands: HandTrajectory,
    /// Grasp vertex per hand (`None` for a free hand).
    pub grasp_vertices: [Option<usize>; 2],
}

struct ArmChain {
    shoulder: usize,
    elbow: usize,
    lengths: (f64, f64),
}

fn arm_chain(skel: &Skeleton, side: usize) -> Result<ArmChain> {
    let wrist = skel.wrists()[side];
    let elbow = skel
        .parent(wrist)
        .ok_or_else(|| Error::InvalidSkeleton("wrist without parent".into()))?;
    let shoulder = skel
        .parent(elbow)
        .ok_or_else(|| Error::InvalidSkeleton("elbow without parent".into()))?;
    for j in [shoulder, elbow] {
        if !skel.rotated().contains(&j) {
            return Err(Error::InvalidSkeleton(format!("arm joint {} carries no rotation", skel.names()[j])));
        }
    }
    Ok(ArmChain {
        shoulder,
        elbow,
        lengths: skel.arm_lengths(side),
    })
}

/// First rotated non-root ancestor of the left shoulder, used for lean.
fn lean_joint(skel: &Skeleton, shoulder: usize) -> Option<usize> {
    let mut chain = Vec::new();
    let mut j = skel.parent(shoulder);
    while let Some(p) = j {
        chain.push(p);
        j = skel.parent(p);
    }
    chain.into_iter().rev().find(|&p| p != 0 && skel.rotated().contains(&p))
}

fn lerp(a: &Vec3, b: &Vec3, u: f64) -> Vec3 {
    a + (b - a) * u
}

/// Builds the object sequence and body motion for `spec`. Fails with
/// [`Error::Unreachable`] when some wrist target is beyond
/// [`REACH_LIMIT`] of the arm.
pub fn generate_scenario(spec: &ScenarioSpec, skel: &Skeleton) -> Result<Scenario> {
    spec.validate()?;
    let mesh = spec.primitive.mesh(spec.spacing)?;
    let targets = spec.primitive.grasp_targets(spec.hands);
    let mut grasp_vertices = [None, None];
    for h in 0..2 {
        if let Some(p) = targets[h] {
            grasp_vertices[h] = Some(nearest_vertex(&mesh.vertices, &p)?.0);
        }
    }
    let transforms: Vec<RigidTransform> = (0..spec.frames).map(|t| spec.object_transform(t)).collect();
    let object = ObjectSequence::new(mesh, transforms, spec.fps)?;
    let arms = [arm_chain(skel, 0)?, arm_chain(skel, 1)?];
    let lean = lean_joint(skel, arms[0].shoulder);
    let (ts, te) = spec.contact_window();
    let last = spec.frames - 1;

    let grasp_world = |h: usize, t: usize| -> Result<Option<Vec3>> {
        grasp_vertices[h].map(|i| object.vertex_at(t, i)).transpose()
    };
    let root_z = if skel.feet().is_empty() {
        let zs: Vec<f64> = (0..2)
            .filter_map(|h| grasp_vertices[h].map(|_| h))
            .flat_map(|h| [grasp_world(h, ts), grasp_world(h, te)])
            .map(|g| g.map(|g| g.expect("grasped hand").z))
            .collect::<Result<_>>()?;
        let mid = zs.iter().sum::<f64>() / zs.len() as f64;
        (mid - 0.3 + spec.style.height_bias).clamp(0.45, 1.0)
    } else {
        skel.standing_root_height()
    };
    let front = spec.primitive.front_extent() + spec.style.stance;
    let contact_root = |t: usize| -> (Vec3, f64) {
        let (p, yaw) = spec.object_pose(t);
        let xy = p + rot_z(yaw) * Vec3::new(-front, 0.0, 0.0);
        (Vec3::new(xy.x, xy.y, root_z), yaw)
    };

    let mut roots = Vec::with_capacity(spec.frames);
    let mut rotations = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (root, yaw) = if t < ts {
            let (r, yaw) = contact_root(ts);
            let back = spec.walk_in * (1.0 - smoothstep(t as f64 / ts as f64));
            (r + rot_z(yaw) * Vec3::new(-back, 0.0, 0.0), yaw)
        } else if t > te {
            let (r, yaw) = contact_root(te);
            let back = spec.step_back * smoothstep((t - te) as f64 / (last - te) as f64);
            (r + rot_z(yaw) * Vec3::new(-back, 0.0, 0.0), yaw)
        } else {
            contact_root(t)
        };
        let mut local: Vec<Mat3> = vec![Mat3::identity(); skel.num_joints()];
        local[0] = rot_z(yaw);
        if let Some(j) = lean {
            local[j] = rot_y(spec.style.lean);
        }
        let identity: Vec<Rotation6D> = skel
            .rotated()
            .iter()
            .map(|&j| matrix_to_sixd(&local[j]))
            .collect::<Result<_>>()?;
        let (pos, glob) = forward_kinematics_full(skel, &root, &identity)?;
        for (h, arm) in arms.iter().enumerate() {
            let sign = if h == 0 { 1.0 } else { -1.0 };
            let parent = skel.parent(arm.shoulder).expect("shoulder has a parent");
            let body = glob[parent];
            let shoulder = pos[arm.shoulder];
            let rest = shoulder + body * Vec3::new(0.06, 0.05 * sign, -0.49);
            let target = if grasp_vertices[h].is_none() {
                rest
            } else if t < ts {
                let g = grasp_world(h, ts)?.expect("grasped hand");
                lerp(&rest, &g, smoothstep(t as f64 / ts as f64))
            } else if t > te {
                let g = grasp_world(h, te)?.expect("grasped hand");
                lerp(&g, &rest, smoothstep((t - te) as f64 / (last - te) as f64))
            } else {
                grasp_world(h, t)?.expect("grasped hand")
            };
            let (l1, l2) = arm.lengths;
            let reach = (target - shoulder).norm();
            if reach > REACH_LIMIT * (l1 + l2) {
                return Err(Error::Unreachable(format!(
                    "frame {t}: {:?} target {reach:.3} m from shoulder exceeds {:.3} m",
                    Hand::BOTH[h],
                    REACH_LIMIT * (l1 + l2)
                )));
            }
            let pole = glob[0] * Vec3::new(-0.5, sign * spec.style.elbow_out, -0.7);
            let sol = solve_two_bone(&shoulder, &target, l1, l2, &pole)?;
            let (upper, lower) = arm_rotations(&sol, &skel.offset(arm.elbow), &skel.offset(skel.wrists()[h]));
            local[arm.shoulder] = glob[parent].transpose() * upper;
            local[arm.elbow] = upper.transpose() * lower;
        }
        roots.push(root);
        rotations.push(
            skel.rotated()
                .iter()
                .map(|&j| matrix_to_sixd(&local[j]))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let poses = PoseSequence::new(skel, roots, rotations)?;
    let hands = HandTrajectory::from_poses(&poses, skel);
    Ok(Scenario {
        object,
        poses,
        hands,
        grasp_vertices,
    })
}
