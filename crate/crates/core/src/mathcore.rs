//! Rotation representations, similarity alignment and the small fixed-size
//! linear algebra used everywhere else.
//!
//! All geometry is `f64` and lengths are meters.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance accepted by [`matrix_to_sixd`].
pub const ORTHONORMAL_TOL: f64 = 1e-6;

const DEGENERATE_EPS: f64 = 1e-12;

/// Continuous 6D rotation encoding: the first two columns of a rotation
/// matrix, column-major (`[c0.x, c0.y, c0.z, c1.x, c1.y, c1.z]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn to_matrix(&self) -> Result<Mat3> {
        sixd_to_matrix(self)
    }

    pub fn from_matrix(r: &Mat3) -> Result<Self> {
        matrix_to_sixd(r)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; 6] = values
            .try_into()
            .map_err(|_| Error::ShapeMismatch(format!("6D rotation needs 6 values, got {}", values.len())))?;
        Ok(Rotation6D(arr))
    }
}

/// Gram-Schmidt on the two encoded columns; third column is their cross product.
pub fn sixd_to_matrix(r: &Rotation6D) -> Result<Mat3> {
    let v = &r.0;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateRotation("non-finite component".into()));
    }
    let a1 = Vec3::new(v[0], v[1], v[2]);
    let a2 = Vec3::new(v[3], v[4], v[5]);
    let n1 = a1.norm();
    if n1 < DEGENERATE_EPS {
        return Err(Error::DegenerateRotation("first column is zero".into()));
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm();
    if n2 < DEGENERATE_EPS * a2.norm().max(1.0) {
        return Err(Error::DegenerateRotation(
            "second column is zero or parallel to the first".into(),
        ));
    }
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    Ok(Mat3::from_columns(&[b1, b2, b3]))
}

pub fn matrix_to_sixd(r: &Mat3) -> Result<Rotation6D> {
    check_rotation(r)?;
    Ok(Rotation6D([
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]))
}

/// Largest absolute deviation of `RᵀR` from identity, or of `det R` from 1.
pub fn rotation_deviation(r: &Mat3) -> f64 {
    let rtr = r.transpose() * r - Mat3::identity();
    let orth = rtr.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    orth.max((r.determinant() - 1.0).abs())
}

pub fn check_rotation(r: &Mat3) -> Result<()> {
    let deviation = rotation_deviation(r);
    if !(deviation <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues formula; `axis` need not be normalized.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let n = axis.norm();
    if n == 0.0 {
        return Mat3::identity();
    }
    let k = axis / n;
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Minimal-arc rotation taking direction `from` onto direction `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Mat3 {
    let a = from.normalize();
    let b = to.normalize();
    let axis = a.cross(&b);
    let s = axis.norm();
    let c = a.dot(&b);
    if s < 1e-12 {
        if c > 0.0 {
            return Mat3::identity();
        }
        // Antiparallel: half turn about any axis orthogonal to `a`.
        let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let ortho = a.cross(&helper);
        return axis_angle(&ortho, std::f64::consts::PI);
    }
    axis_angle(&axis, s.atan2(c))
}

/// Similarity transform `p ↦ scale · R p + t`. Rigid when `scale == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rotation(&self.rotation)?;
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::NonFinite(format!("transform scale {}", self.scale)));
        }
        if self.translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("transform translation".into()));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self {
            rotation: rt,
            translation: -(rt * self.translation) * inv_s,
            scale: inv_s,
        }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
            scale: self.scale * other.scale,
        }
    }
}

/// Closed-form least-squares similarity alignment (Umeyama) of `source` onto
/// `target`, with the determinant-sign guard so the result never reflects.
pub fn solve_procrustes(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::RankDeficient(format!("need at least 3 point pairs, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.iter().sum::<Vec3>() * inv_n;
    let mu_t = target.iter().sum::<Vec3>() * inv_n;

    let mut cov = Mat3::zeros();
    let mut scatter = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cov += dt * ds.transpose();
        scatter += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov *= inv_n;
    scatter *= inv_n;
    var_s *= inv_n;

    let eig = scatter.symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::RankDeficient("source points are coincident or collinear".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = svd.singular_values;
    let mut sign = Mat3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    // nalgebra sorts singular values descending, so the flip lands on the smallest.
    let rotation = u * sign * v_t;
    let trace_ds = d[0] * sign[(0, 0)] + d[1] * sign[(1, 1)] + d[2] * sign[(2, 2)];
    let scale = trace_ds / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(RigidTransform {
        rotation,
        translation,
        scale,
    })
}

/// Root-mean-square distance between `transform(source)` and `target`.
pub fn alignment_rms(transform: &RigidTransform, source: &[Vec3], target: &[Vec3]) -> f64 {
    let n = source.len().max(1) as f64;
    let ss: f64 = source
        .iter()
        .zip(target)
        .map(|(s, t)| (transform.apply(s) - t).norm_squared())
        .sum();
    (ss / n).sqrt()
}

pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}
