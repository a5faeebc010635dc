//! The metric suite on hand-built cases.

use motionsynth::eval::{contact_scores, joint_errors, orientation_error, root_errors};
use motionsynth::kinematics::{PoseSequence, ProxyConfig, ProxySurface, Skeleton};
use motionsynth::mathcore::{rot_z, Mat3, Rotation6D, Vec3};

fn main() -> motionsynth::Result<()> {
    let skel = Skeleton::stick9();
    let proxy = ProxySurface::new(&skel, ProxyConfig::default());
    let still = |x: f64| {
        PoseSequence::new(
            &skel,
            vec![Vec3::new(x, 0.0, 0.9); 10],
            vec![vec![Rotation6D::IDENTITY; skel.num_rotated()]; 10],
        )
    };
    let gt = still(0.0)?;
    let shifted = still(0.02)?;
    let same = joint_errors(&gt, &gt, &skel, &proxy)?;
    let off = joint_errors(&shifted, &gt, &skel, &proxy)?;
    println!("GT vs GT: MPJPE {} cm", same.mpjpe);
    println!("2 cm root shift: Hand JPE {:.3}, MPJPE {:.3}, MPVPE {:.3} cm", off.hand_jpe, off.mpjpe, off.mpvpe);
    println!("T_root {:.3} cm", root_errors(&shifted, &gt)?.t_root);
    println!("O_root of a half turn: {:.6} (sqrt 8 = {:.6})", orientation_error(&rot_z(std::f64::consts::PI), &Mat3::identity()), 8f64.sqrt());

    let pred = [[true, false], [true, false], [false, false], [false, false]];
    let truth = [[true, false], [false, false], [true, false], [false, false]];
    let s = contact_scores(&pred, &truth)?;
    println!("contact: precision {} recall {} F1 {}", s.precision, s.recall, s.f1);
    Ok(())
}
