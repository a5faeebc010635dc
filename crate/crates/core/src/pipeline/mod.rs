//! Object motion → hand trajectories → contact rectification → full body.

mod frame;
mod motion_file;
mod stage;

pub use frame::PlanarFrame;
pub use motion_file::{read_motion, write_motion, MotionFile, MOTION_SCHEMA, MOTION_VERSION};
pub use stage::{
    build_stage1_dataset, build_stage2_dataset, compat_hash, CheckpointMeta, ModelDims, Stage, StageModel, StageTrainer, TrainSettings,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_bps, nearest_vertex, transform_mesh, BpsBasis, ObjectSequence};
use crate::kinematics::PoseSequence;
use crate::mathcore::{Mat3, Vec3};
use crate::nn::Tensor;

/// Distance below which a predicted hand is snapped onto the object.
pub const RECTIFY_THRESHOLD: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }
}

/// Left and right wrist positions per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    pub frames: Vec<[Vec3; 2]>,
}

impl HandTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn hand(&self, t: usize, hand: Hand) -> Vec3 {
        self.frames[t][hand.index()]
    }

    /// `T × 6`: left xyz then right xyz.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(self.len(), 6, |t, c| self.frames[t][c / 3][c % 3])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.cols() != 6 {
            return Err(Error::ShapeMismatch(format!("hand trajectory needs 6 columns, got {}", t.cols())));
        }
        if !t.all_finite() {
            return Err(Error::NonFinite("hand trajectory".into()));
        }
        Ok(Self {
            frames: (0..t.rows())
                .map(|r| {
                    let row = t.row(r);
                    [Vec3::new(row[0], row[1], row[2]), Vec3::new(row[3], row[4], row[5])]
                })
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            frames: self.frames.iter().map(|[l, r]| [f(l), f(r)]).collect(),
        }
    }

    pub fn from_poses(poses: &PoseSequence, skel: &crate::kinematics::Skeleton) -> Self {
        Self {
            frames: (0..poses.len()).map(|t| poses.wrist_positions(skel, t)).collect(),
        }
    }
}

/// First-contact anchor of one hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactAnchor {
    pub hand: Hand,
    pub frame: usize,
    pub vertex: usize,
    /// Hand minus anchor vertex at the anchor frame (world frame).
    pub offset: Vec3,
    /// Object rotation at the anchor frame.
    pub rotation: Mat3,
}

/// Raw per-frame object feature `[g, d(B_t, V_t)]`, `T × (3 + 3 n_bps)`.
pub fn encode_object(seq: &ObjectSequence, basis: &BpsBasis) -> Result<Tensor> {
    seq.validate()?;
    let width = basis.feature_len();
    let mut data = Vec::with_capacity(seq.len() * width);
    for t in 0..seq.len() {
        let verts = transform_mesh(seq, t)?;
        data.extend(compute_bps(basis, &verts)?.to_raw());
    }
    Tensor::from_vec(seq.len(), width, data)
}

/// Stage-1 condition: features of the motion re-expressed in its own
/// object frame, plus that frame.
pub fn stage1_condition(seq: &ObjectSequence, basis: &BpsBasis) -> Result<(Tensor, PlanarFrame)> {
    let frame = PlanarFrame::of_object(seq)?;
    Ok((encode_object(&frame.object_to_local(seq)?, basis)?, frame))
}

/// `count` stage-1 draws for one object motion, in world coordinates.
pub fn sample_hands<R: Rng + ?Sized>(stage1: &StageModel, seq: &ObjectSequence, count: usize, rng: &mut R) -> Result<Vec<HandTrajectory>> {
    let (features, frame) = stage1_condition(seq, &stage1.basis)?;
    stage1
        .sample(&features, count, rng)?
        .iter()
        .map(|t| Ok(frame.hands_to_world(&HandTrajectory::from_tensor(t)?)))
        .collect()
}

fn check_lengths(hands: &HandTrajectory, seq: &ObjectSequence) -> Result<()> {
    if hands.len() != seq.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} hand frames for a {}-frame object sequence",
            hands.len(),
            seq.len()
        )));
    }
    Ok(())
}

/// Per frame and hand: `(nearest vertex index, distance)` to the posed mesh.
pub fn hand_object_distances(hands: &HandTrajectory, seq: &ObjectSequence) -> Result<Vec<[(usize, f64); 2]>> {
    check_lengths(hands, seq)?;
    (0..seq.len())
        .map(|t| {
            let verts = transform_mesh(seq, t)?;
            Ok([nearest_vertex(&verts, &hands.frames[t][0])?, nearest_vertex(&verts, &hands.frames[t][1])?])
        })
        .collect()
}

/// For each hand independently, finds the first frame `k` closer than
/// `threshold` to the object, records the nearest vertex `i` and offset
/// `p = H_k − V_k^i`, and replaces every later frame with
/// `V_t^i + R_t R_kᵀ p`. Frames up to and including `k` are unchanged and
/// the anchor persists to the end of the sequence.
pub fn rectify_contacts(hands: &HandTrajectory, seq: &ObjectSequence, threshold: f64) -> Result<(HandTrajectory, Vec<ContactAnchor>)> {
    let dist = hand_object_distances(hands, seq)?;
    let mut out = hands.clone();
    let mut anchors = Vec::new();
    for hand in Hand::BOTH {
        let h = hand.index();
        let Some(k) = (0..seq.len()).find(|&t| dist[t][h].1 < threshold) else {
            continue;
        };
        let i = dist[k][h].0;
        let offset = hands.frames[k][h] - seq.vertex_at(k, i)?;
        let rk = seq.transforms[k].rotation;
        for t in k + 1..seq.len() {
            let rt = seq.transforms[t].rotation;
            out.frames[t][h] = seq.vertex_at(t, i)? + rt * (rk.transpose() * offset);
        }
        anchors.push(ContactAnchor {
            hand,
            frame: k,
            vertex: i,
            offset,
            rotation: rk,
        });
    }
    Ok((out, anchors))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandMode {
    None,
    OneHanded(Hand),
    TwoHanded,
}

/// A hand is in contact iff it ever comes strictly closer than `threshold`.
pub fn infer_hand_mode(hands: &HandTrajectory, seq: &ObjectSequence, threshold: f64) -> Result<HandMode> {
    let dist = hand_object_distances(hands, seq)?;
    let touches = |h: usize| dist.iter().any(|d| d[h].1 < threshold);
    Ok(match (touches(0), touches(1)) {
        (true, true) => HandMode::TwoHanded,
        (true, false) => HandMode::OneHanded(Hand::Left),
        (false, true) => HandMode::OneHanded(Hand::Right),
        (false, false) => HandMode::None,
    })
}

/// One draw of stage 1.
pub fn predict_hands(stage1: &StageModel, seq: &ObjectSequence, seed: u64) -> Result<HandTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_hands(stage1, seq, 1, &mut rng)?.remove(0))
}

/// One draw of stage 2 conditioned on wrist positions.
pub fn predict_fullbody(stage2: &StageModel, hands: &HandTrajectory, seed: u64) -> Result<PoseSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = stage2.sample(&hands.to_tensor(), 1, &mut rng)?;
    PoseSequence::unflatten(&stage2.skeleton, &out[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub poses: PoseSequence,
    /// Stage-1 prediction before rectification.
    pub predicted_hands: HandTrajectory,
    /// Hands handed to stage 2 (rectified unless disabled).
    pub hands: HandTrajectory,
    pub anchors: Vec<ContactAnchor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub seed: u64,
    pub rectify: bool,
    pub threshold: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            rectify: true,
            threshold: RECTIFY_THRESHOLD,
        }
    }
}

pub fn check_compatible(stage1: &StageModel, stage2: &StageModel) -> Result<()> {
    if stage1.stage != Stage::Hands || stage2.stage != Stage::FullBody {
        return Err(Error::Incompatible("expected a stage-1 and a stage-2 checkpoint, in that order".into()));
    }
    let (a, b) = (stage1.compat_hash(), stage2.compat_hash());
    if a != b {
        return Err(Error::Incompatible(format!(
            "stage-1 hash {a} does not match stage-2 hash {b} (different BPS basis or skeleton)"
        )));
    }
    Ok(())
}

/// encode → predict hands → rectify → predict full body. Stage seeds are
/// derived from `options.seed`, so the unrectified variant sees the same
/// stage-1 draw.
pub fn run_pipeline(seq: &ObjectSequence, stage1: &StageModel, stage2: &StageModel, options: PipelineOptions) -> Result<PipelineOutput> {
    check_compatible(stage1, stage2)?;
    let predicted_hands = predict_hands(stage1, seq, options.seed.wrapping_mul(2))?;
    let (hands, anchors) = if options.rectify {
        rectify_contacts(&predicted_hands, seq, options.threshold)?
    } else {
        (predicted_hands.clone(), Vec::new())
    };
    let poses = predict_fullbody(stage2, &hands, options.seed.wrapping_mul(2).wrapping_add(1))?;
    Ok(PipelineOutput {
        poses,
        predicted_hands,
        hands,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::box_mesh;
    use crate::geometry::Mesh;
    use crate::mathcore::{rot_z, RigidTransform};

    fn sliding_point(frames: usize) -> ObjectSequence {
        let mesh = Mesh::new("p", vec![Vec3::zeros(), Vec3::new(5.0, 5.0, 5.0)], vec![[0, 1, 0]]).unwrap();
        let transforms = (0..frames)
            .map(|t| RigidTransform::new(Mat3::identity(), Vec3::new(t as f64, 0.0, 0.0)))
            .collect();
        ObjectSequence::new(mesh, transforms, 30.0).unwrap()
    }

    #[test]
    fn translating_object_carries_anchor() {
        let seq = sliding_point(5);
        let hands = HandTrajectory {
            frames: (0..5).map(|_| [Vec3::new(0.0, 0.02, 0.0), Vec3::new(0.0, 3.0, 0.0)]).collect(),
        };
        let (out, anchors) = rectify_contacts(&hands, &seq, RECTIFY_THRESHOLD).unwrap();
        assert_eq!(anchors.len(), 1);
        assert_eq!((anchors[0].hand, anchors[0].frame, anchors[0].vertex), (Hand::Left, 0, 0));
        for t in 1..5 {
            assert!((out.frames[t][0] - Vec3::new(t as f64, 0.02, 0.0)).norm() < 1e-12);
            assert!((out.frames[t][0] - out.frames[t - 1][0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
            assert_eq!(out.frames[t][1], hands.frames[t][1]);
        }
    }

    #[test]
    fn no_contact_is_identity() {
        let seq = sliding_point(4);
        let hands = HandTrajectory {
            frames: vec![[Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, -1.0, 0.0)]; 4],
        };
        let (out, anchors) = rectify_contacts(&hands, &seq, RECTIFY_THRESHOLD).unwrap();
        assert_eq!(out, hands);
        assert!(anchors.is_empty());
    }

    #[test]
    fn rotating_object_keeps_distance_and_is_idempotent() {
        let mesh = box_mesh("b", Vec3::new(0.4, 0.3, 0.5), 0.05).unwrap();
        let transforms = (0..12)
            .map(|t| RigidTransform::new(rot_z(0.2 * t as f64), Vec3::new(0.05 * t as f64, 0.0, 0.3)))
            .collect();
        let seq = ObjectSequence::new(mesh, transforms, 30.0).unwrap();
        let hands = HandTrajectory {
            frames: (0..12)
                .map(|t| [Vec3::new(0.215, 0.0, 0.55 - 0.01 * t as f64), Vec3::new(-0.5, -0.5, 1.0 + 0.01 * t as f64)])
                .collect(),
        };
        let (once, anchors) = rectify_contacts(&hands, &seq, RECTIFY_THRESHOLD).unwrap();
        let (twice, anchors2) = rectify_contacts(&once, &seq, RECTIFY_THRESHOLD).unwrap();
        assert_eq!(once, twice);
        assert_eq!(anchors, anchors2);
        for a in &anchors {
            for t in a.frame + 1..12 {
                let d = (once.frames[t][a.hand.index()] - seq.vertex_at(t, a.vertex).unwrap()).norm();
                assert!((d - a.offset.norm()).abs() < 1e-9);
            }
            for t in 0..=a.frame {
                assert_eq!(once.frames[t], hands.frames[t]);
            }
        }
    }

    #[test]
    fn hand_modes() {
        let seq = sliding_point(1);
        let mode = |l: f64, r: f64| {
            let hands = HandTrajectory {
                frames: vec![[Vec3::new(0.0, l, 0.0), Vec3::new(0.0, -r, 0.0)]],
            };
            infer_hand_mode(&hands, &seq, RECTIFY_THRESHOLD).unwrap()
        };
        assert_eq!(mode(0.01, 0.01), HandMode::TwoHanded);
        assert_eq!(mode(0.01, 0.5), HandMode::OneHanded(Hand::Left));
        assert_eq!(mode(0.03, 0.03), HandMode::None);
    }

    #[test]
    fn length_mismatch_errors() {
        let seq = sliding_point(3);
        let hands = HandTrajectory {
            frames: vec![[Vec3::zeros(); 2]; 2],
        };
        assert!(rectify_contacts(&hands, &seq, 0.03).is_err());
    }

    #[test]
    fn feature_width_and_static_object() {
        let mesh = box_mesh("b", Vec3::new(0.4, 0.3, 0.5), 0.05).unwrap();
        let seq = ObjectSequence::new(mesh, vec![RigidTransform::identity(); 3], 30.0).unwrap();
        let basis = BpsBasis::sample(64, 1.0, 0).unwrap();
        let f = encode_object(&seq, &basis).unwrap();
        assert_eq!(f.shape(), [3, 195]);
        assert_eq!(f.row(0), f.row(2));
    }

    #[test]
    fn hand_tensor_round_trip() {
        let h = HandTrajectory {
            frames: vec![[Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]],
        };
        assert_eq!(h.to_tensor().data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(HandTrajectory::from_tensor(&h.to_tensor()).unwrap(), h);
    }
}
