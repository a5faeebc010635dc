//! Poses the 9-joint stick skeleton with two-bone IK and checks the wrist
//! lands on the target through forward kinematics.

use motionsynth::kinematics::{forward_kinematics_full, Skeleton};
use motionsynth::mathcore::{matrix_to_sixd, Mat3, Vec3};
use motionsynth::synthdata::ik::{arm_rotations, solve_two_bone};

fn main() -> motionsynth::Result<()> {
    let skel = Skeleton::stick9();
    let root = Vec3::new(0.0, 0.0, 0.9);
    let rest: Vec<_> = skel.rotated().iter().map(|_| matrix_to_sixd(&Mat3::identity())).collect::<Result<_, _>>()?;
    let (pos, glob) = forward_kinematics_full(&skel, &root, &rest)?;
    for (name, p) in skel.names().iter().zip(&pos) {
        println!("{name:>15} {:>7.3} {:>7.3} {:>7.3}", p.x, p.y, p.z);
    }

    let [shoulder, elbow, wrist] = [3, 4, 5];
    let (l1, l2) = skel.arm_lengths(0);
    let target = pos[shoulder] + Vec3::new(0.35, 0.05, -0.2);
    let sol = solve_two_bone(&pos[shoulder], &target, l1, l2, &Vec3::new(-0.5, 1.0, -0.7))?;
    println!("elbow bend {:.1} deg", sol.elbow_angle.to_degrees());

    let (upper, lower) = arm_rotations(&sol, &skel.offset(elbow), &skel.offset(wrist));
    let parent = skel.parent(shoulder).expect("shoulder has a parent");
    let mut local = vec![Mat3::identity(); skel.num_joints()];
    local[shoulder] = glob[parent].transpose() * upper;
    local[elbow] = upper.transpose() * lower;
    let rots = skel.rotated().iter().map(|&j| matrix_to_sixd(&local[j])).collect::<Result<Vec<_>, _>>()?;
    let (posed, _) = forward_kinematics_full(&skel, &root, &rots)?;
    println!("wrist error after IK + FK: {:.2e} m", (posed[wrist] - target).norm());
    Ok(())
}
