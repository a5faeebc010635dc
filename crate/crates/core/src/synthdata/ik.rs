//! Analytic two-bone IK for shoulder-elbow-wrist chains.

use crate::error::{Error, Result};
use crate::mathcore::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoBoneSolution {
    pub elbow: Vec3,
    /// Bend away from a straight arm, radians (0 = straight).
    pub elbow_angle: f64,
    /// Unit direction shoulder → elbow.
    pub upper_dir: Vec3,
    /// Unit direction elbow → wrist.
    pub lower_dir: Vec3,
    /// Unit normal of the bend plane (the elbow hinge axis).
    pub hinge: Vec3,
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let trial = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (trial - v * v.dot(&trial)).normalize()
}

/// Places the elbow so that `|elbow − shoulder| = l1` and
/// `|target − elbow| = l2`, bending toward `pole`. Fails when the target
/// lies outside the annulus `[|l1 − l2|, l1 + l2]`.
pub fn solve_two_bone(shoulder: &Vec3, target: &Vec3, l1: f64, l2: f64, pole: &Vec3) -> Result<TwoBoneSolution> {
    const SLACK: f64 = 1e-12;
    let to = target - shoulder;
    let d = to.norm();
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::Config(format!("bone lengths must be positive ({l1}, {l2})")));
    }
    if d > l1 + l2 + SLACK || d < (l1 - l2).abs() - SLACK || d == 0.0 {
        return Err(Error::Unreachable(format!(
            "target at {d:.4} m, arm spans [{:.4}, {:.4}]",
            (l1 - l2).abs(),
            l1 + l2
        )));
    }
    let u = to / d;
    let mut side = pole - u * u.dot(pole);
    if side.norm() < 1e-9 {
        side = any_perpendicular(&u);
    }
    let side = side.normalize();
    let cos_a = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
    let a = cos_a.acos();
    let elbow = shoulder + l1 * (cos_a * u + a.sin() * side);
    let cos_e = ((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    Ok(TwoBoneSolution {
        elbow,
        elbow_angle: std::f64::consts::PI - cos_e.acos(),
        upper_dir: (elbow - shoulder) / l1,
        lower_dir: (target - elbow) / l2,
        hinge: u.cross(&side).normalize(),
    })
}

/// Orthonormal frame with first column `a` and second column the part of
/// `m` orthogonal to `a`.
fn frame(a: &Vec3, m: &Vec3) -> Mat3 {
    let a = a.normalize();
    let mut m = m - a * a.dot(m);
    if m.norm() < 1e-9 {
        m = any_perpendicular(&a);
    }
    let m = m.normalize();
    Mat3::from_columns(&[a, m, a.cross(&m)])
}

/// Global rotations of the upper and lower arm that carry the rest bone
/// directions `rest_upper`, `rest_lower` (in the parent-of-bone frame at
/// identity) onto the solved directions. Both use the hinge as the image of
/// a shared rest reference axis, so the relative elbow rotation is a pure
/// hinge when the rest bones are collinear.
pub fn arm_rotations(sol: &TwoBoneSolution, rest_upper: &Vec3, rest_lower: &Vec3) -> (Mat3, Mat3) {
    let reference = any_perpendicular(&rest_upper.normalize());
    let upper = frame(&sol.upper_dir, &sol.hinge) * frame(rest_upper, &reference).transpose();
    let lower = frame(&sol.lower_dir, &sol.hinge) * frame(rest_lower, &reference).transpose();
    (upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::rotation_deviation;

    #[test]
    fn straight_arm_at_full_reach() {
        let s = solve_two_bone(&Vec3::zeros(), &Vec3::new(0.54, 0.0, 0.0), 0.28, 0.26, &Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(s.elbow_angle.abs() < 1e-6);
        assert!((s.elbow - Vec3::new(0.28, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn law_of_cosines_at_one_bone_length() {
        let (l1, l2) = (0.28, 0.26);
        let s = solve_two_bone(&Vec3::zeros(), &Vec3::new(l1, 0.0, 0.0), l1, l2, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let interior = (l2 / (2.0 * l1)).acos();
        assert!((s.elbow_angle - (std::f64::consts::PI - interior)).abs() < 1e-12);
        assert!(((s.elbow).norm() - l1).abs() < 1e-12);
        assert!(((Vec3::new(l1, 0.0, 0.0) - s.elbow).norm() - l2).abs() < 1e-12);
        assert!(s.elbow.y > 0.0);
    }

    #[test]
    fn out_of_reach() {
        let r = solve_two_bone(&Vec3::zeros(), &Vec3::new(0.6, 0.0, 0.0), 0.28, 0.26, &Vec3::z());
        assert!(matches!(r, Err(Error::Unreachable(_))));
        let r = solve_two_bone(&Vec3::zeros(), &Vec3::new(0.01, 0.0, 0.0), 0.28, 0.2, &Vec3::z());
        assert!(matches!(r, Err(Error::Unreachable(_))));
    }

    #[test]
    fn rotations_reach_target() {
        let rest = Vec3::new(0.0, 0.0, -1.0);
        let sh = Vec3::new(0.1, 0.2, 1.3);
        let target = Vec3::new(0.4, 0.1, 0.9);
        let s = solve_two_bone(&sh, &target, 0.28, 0.26, &Vec3::new(-0.3, 1.0, -0.5)).unwrap();
        let (gu, gl) = arm_rotations(&s, &rest, &rest);
        assert!(rotation_deviation(&gu) < 1e-12 && rotation_deviation(&gl) < 1e-12);
        let wrist = sh + gu * (rest * 0.28) + gl * (rest * 0.26);
        assert!((wrist - target).norm() < 1e-12);
        let local = gu.transpose() * gl;
        let axis = gu.transpose() * s.hinge;
        assert!((local * axis - axis).norm() < 1e-12);
    }
}
