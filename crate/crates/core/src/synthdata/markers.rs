//! Object poses from tracked markers.

use crate::error::{Error, Result};
use crate::mathcore::{alignment_rms, solve_procrustes, RigidTransform, Vec3};

/// Relative scale deviation above which a solve is logged as suspicious
/// (markers on a rigid object should not change scale).
pub const SCALE_WARN_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSolve {
    /// Per-frame similarity transforms from rest markers to observations.
    pub transforms: Vec<RigidTransform>,
    /// Per-frame RMS alignment residual, meters.
    pub residuals: Vec<f64>,
    /// Frames whose scale left `1 ± SCALE_WARN_TOLERANCE`.
    pub scale_warnings: Vec<usize>,
}

pub fn solve_object_pose_from_markers(rest: &[Vec3], observed: &[Vec<Vec3>]) -> Result<MarkerSolve> {
    if observed.is_empty() {
        return Err(Error::Empty("no marker frames"));
    }
    let mut out = MarkerSolve {
        transforms: Vec::with_capacity(observed.len()),
        residuals: Vec::with_capacity(observed.len()),
        scale_warnings: Vec::new(),
    };
    for (t, frame) in observed.iter().enumerate() {
        if frame.len() != rest.len() {
            return Err(Error::ShapeMismatch(format!(
                "frame {t} has {} markers, rest set has {}",
                frame.len(),
                rest.len()
            )));
        }
        let tf = solve_procrustes(rest, frame)?;
        if (tf.scale - 1.0).abs() > SCALE_WARN_TOLERANCE {
            log::warn!("frame {t}: marker scale {:.4} deviates from rigid", tf.scale);
            out.scale_warnings.push(t);
        }
        out.residuals.push(alignment_rms(&tf, rest, frame));
        out.transforms.push(tf);
    }
    Ok(out)
}
