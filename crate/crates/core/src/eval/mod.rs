//! Motion metrics: joint, root, collision, contact and foot-sliding errors.
//! Distances are reported in centimeters.

mod harness;
mod report;

pub use harness::{
    HandBaselines,
    evaluate, hand_baselines, record_seed_rng, sample_stage1_hands, EvalReport, EvalSettings, SelectBy, SequenceRow, Stage1Report, Variant,
    VariantReport,
};
pub use report::{MetricRow, COLUMNS};

use crate::error::{Error, Result};
use crate::geometry::{ObjectSequence, SdfField};
use crate::kinematics::{PoseSequence, ProxySurface, Skeleton};
use crate::mathcore::{Mat3, Vec3};
use crate::pipeline::{hand_object_distances, HandTrajectory};

/// Hand-object distance below which a hand counts as in contact.
pub const CONTACT_THRESHOLD: f64 = 0.05;
/// Penetration depth beyond which a body point counts as colliding.
pub const COLLISION_THRESHOLD: f64 = 0.04;
/// Foot height below which horizontal foot motion counts as sliding.
pub const FOOT_HEIGHT: f64 = 0.05;

const CM: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointErrors {
    pub hand_jpe: f64,
    pub mpjpe: f64,
    pub mpvpe: f64,
}

fn check_same_length(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("sequences of {a} and {b} frames")));
    }
    if a == 0 {
        return Err(Error::Empty("metric over an empty sequence"));
    }
    Ok(())
}

fn mean_distance<'a>(pairs: impl Iterator<Item = (&'a Vec3, &'a Vec3)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b).norm();
        n += 1;
    }
    sum / n.max(1) as f64
}

/// Wrist, joint and proxy-surface errors.
pub fn joint_errors(pred: &PoseSequence, gt: &PoseSequence, skel: &Skeleton, proxy: &ProxySurface) -> Result<JointErrors> {
    check_same_length(pred.len(), gt.len())?;
    let (pp, gp) = (pred.positions(), gt.positions());
    if pp[0].len() != skel.num_joints() || gp[0].len() != skel.num_joints() {
        return Err(Error::ShapeMismatch("poses do not match the skeleton".into()));
    }
    let wrists = skel.wrists();
    let hand = mean_distance((0..pred.len()).flat_map(|t| wrists.iter().map(move |&w| (&pp[t][w], &gp[t][w]))));
    let all = mean_distance((0..pred.len()).flat_map(|t| pp[t].iter().zip(&gp[t])));
    let mut vsum = 0.0;
    for t in 0..pred.len() {
        let a = proxy.sample(skel, &pred.root_translation[t], &pred.rotations[t])?;
        let b = proxy.sample(skel, &gt.root_translation[t], &gt.rotations[t])?;
        vsum += mean_distance(a.iter().zip(&b));
    }
    Ok(JointErrors {
        hand_jpe: hand * CM,
        mpjpe: all * CM,
        mpvpe: vsum / pred.len() as f64 * CM,
    })
}

/// Mean wrist error between two hand trajectories.
pub fn hand_jpe(pred: &HandTrajectory, gt: &HandTrajectory) -> Result<f64> {
    check_same_length(pred.len(), gt.len())?;
    Ok(mean_distance(pred.frames.iter().zip(&gt.frames).flat_map(|(a, b)| a.iter().zip(b.iter()))) * CM)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootErrors {
    pub t_root: f64,
    pub o_root: f64,
}

/// Root translation error (cm) and mean `‖R_pred R_gtᵀ − I‖_F`.
pub fn root_errors(pred: &PoseSequence, gt: &PoseSequence) -> Result<RootErrors> {
    check_same_length(pred.len(), gt.len())?;
    let t_root = mean_distance(pred.root_translation.iter().zip(&gt.root_translation)) * CM;
    let mut o = 0.0;
    for t in 0..pred.len() {
        let rp = pred.rotations[t][0].to_matrix()?;
        let rg = gt.rotations[t][0].to_matrix()?;
        o += orientation_error(&rp, &rg);
    }
    Ok(RootErrors {
        t_root,
        o_root: o / pred.len() as f64,
    })
}

pub fn orientation_error(pred: &Mat3, gt: &Mat3) -> f64 {
    (pred * gt.transpose() - Mat3::identity()).norm()
}

/// Percentage of frames in which some proxy point lies deeper than
/// `threshold` inside the object. `sdf` is expressed in the object's local
/// frame; points are mapped through the inverse object transform.
pub fn collision_percentage(
    poses: &PoseSequence,
    skel: &Skeleton,
    proxy: &ProxySurface,
    object: &ObjectSequence,
    sdf: &SdfField,
    threshold: f64,
) -> Result<f64> {
    check_same_length(poses.len(), object.len())?;
    let mut hits = 0usize;
    for t in 0..poses.len() {
        let inv = object.transform(t)?.inverse();
        let pts = proxy.sample(skel, &poses.root_translation[t], &poses.rotations[t])?;
        if pts.iter().any(|p| {
            let d = sdf.query(&inv.apply(p));
            d < 0.0 && d.abs() > threshold
        }) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / poses.len() as f64)
}

/// Per frame, left and right: minimum hand-to-vertex distance below
/// `threshold`.
pub fn contact_labels(hands: &HandTrajectory, seq: &ObjectSequence, threshold: f64) -> Result<Vec<[bool; 2]>> {
    Ok(hand_object_distances(hands, seq)?
        .into_iter()
        .map(|d| [d[0].1 < threshold, d[1].1 < threshold])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 over all frame-hand pairs. Ratios with a zero
/// denominator are 0, and F1 is 0 when precision + recall is 0.
pub fn contact_scores(pred: &[[bool; 2]], gt: &[[bool; 2]]) -> Result<ContactScores> {
    check_same_length(pred.len(), gt.len())?;
    let (mut tp, mut fp, mut fne) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gt) {
        for h in 0..2 {
            match (p[h], g[h]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ContactScores { precision, recall, f1 })
}

pub fn contact_metrics(pred: &HandTrajectory, gt: &HandTrajectory, seq: &ObjectSequence, threshold: f64) -> Result<ContactScores> {
    contact_scores(&contact_labels(pred, seq, threshold)?, &contact_labels(gt, seq, threshold)?)
}

/// Height-weighted horizontal foot displacement (cm per frame), or `None`
/// for skeletons without feet. Each frame transition contributes, per foot
/// below `height`, `‖Δxy‖ · (2 − 2^{h/height})` with `h` the foot height
/// (clamped at 0) at the later frame.
pub fn foot_sliding(poses: &PoseSequence, skel: &Skeleton, height: f64) -> Option<f64> {
    if skel.feet().is_empty() {
        return None;
    }
    if poses.len() < 2 {
        return Some(0.0);
    }
    let pos = poses.positions();
    let mut total = 0.0;
    for t in 1..poses.len() {
        for &f in skel.feet() {
            let (a, b) = (pos[t - 1][f], pos[t][f]);
            let h = b.z.max(0.0);
            if h < height {
                let dxy = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
                total += dxy * (2.0 - 2f64.powf(h.min(height) / height));
            }
        }
    }
    Some(total / (poses.len() - 1) as f64 * CM)
}
