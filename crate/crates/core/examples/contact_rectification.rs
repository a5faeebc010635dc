//! Rectification pins each hand to the object from its first contact on:
//! later frames keep the anchor-frame offset, earlier frames are untouched.

use motionsynth::geometry::primitives::box_mesh;
use motionsynth::geometry::ObjectSequence;
use motionsynth::mathcore::{rot_z, RigidTransform, Vec3};
use motionsynth::pipeline::{hand_object_distances, rectify_contacts, HandTrajectory, RECTIFY_THRESHOLD};

fn main() -> motionsynth::Result<()> {
    let mesh = box_mesh("box", Vec3::new(0.3, 0.3, 0.3), 0.05)?;
    let transforms = (0..20)
        .map(|t| {
            let u = (t as f64 - 8.0).max(0.0) / 11.0;
            RigidTransform::new(rot_z(0.4 * u), Vec3::new(0.0, 0.0, 0.5 + 0.3 * u))
        })
        .collect();
    let seq = ObjectSequence::new(mesh, transforms, 30.0)?;

    // The left hand approaches the +y face and then drifts above the moving
    // box; the right hand never gets close.
    let frames = (0..20)
        .map(|t| {
            let approach = (1.0 - t as f64 / 8.0).max(0.0);
            let left = Vec3::new(0.0, 0.16 + 0.3 * approach, 0.65 + 0.01 * t as f64);
            let right = Vec3::new(0.0, -0.6, 0.6);
            [left, right]
        })
        .collect();
    let hands = HandTrajectory { frames };
    let (fixed, anchors) = rectify_contacts(&hands, &seq, RECTIFY_THRESHOLD)?;
    for a in &anchors {
        println!("{:?} anchored at frame {} on vertex {}, offset {:.4} m", a.hand, a.frame, a.vertex, a.offset.norm());
    }

    let before = hand_object_distances(&hands, &seq)?;
    let after = hand_object_distances(&fixed, &seq)?;
    println!("frame  raw dist  rectified dist");
    for t in (0..20).step_by(3) {
        println!("{t:>5}  {:>8.4}  {:>14.4}", before[t][0].1, after[t][0].1);
    }
    let (again, _) = rectify_contacts(&fixed, &seq, RECTIFY_THRESHOLD)?;
    println!("idempotent: {}", again == fixed);
    Ok(())
}
