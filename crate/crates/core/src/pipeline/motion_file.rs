//! JSONL motion files: one header line, then one record per frame.
//!
//! Joint positions and wrists are written for convenience; on read the
//! pose is rebuilt from root translation and 6D rotations, and stored
//! joints must agree with forward kinematics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{PoseSequence, Skeleton, SkeletonConfig};
use crate::mathcore::{Rotation6D, Vec3};

use super::ContactAnchor;

pub const MOTION_SCHEMA: &str = "motion";
pub const MOTION_VERSION: u32 = 1;

const JOINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFile {
    pub fps: f64,
    pub skeleton: Skeleton,
    pub poses: PoseSequence,
    pub anchors: Vec<ContactAnchor>,
    /// `None` for ground truth, otherwise whether contacts were rectified.
    pub rectified: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    fps: f64,
    frames: usize,
    skeleton: SkeletonConfig,
    #[serde(default)]
    anchors: Vec<ContactAnchor>,
    #[serde(default)]
    rectified: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct Wrists {
    left: [f64; 3],
    right: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct Frame {
    frame: usize,
    root: [f64; 3],
    rotations: Vec<[f64; 6]>,
    wrists: Wrists,
    joints: Vec<[f64; 3]>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl MotionFile {
    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            schema: MOTION_SCHEMA.into(),
            version: MOTION_VERSION,
            fps: self.fps,
            frames: self.poses.len(),
            skeleton: self.skeleton.to_config(),
            anchors: self.anchors.clone(),
            rectified: self.rectified,
        };
        let mut out = serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
        out.push('\n');
        let [lw, rw] = self.skeleton.wrists();
        for t in 0..self.poses.len() {
            let joints = &self.poses.positions()[t];
            let rec = Frame {
                frame: t,
                root: arr(&self.poses.root_translation[t]),
                rotations: self.poses.rotations[t].iter().map(|r| r.0).collect(),
                wrists: Wrists {
                    left: arr(&joints[lw]),
                    right: arr(&joints[rw]),
                },
                joints: joints.iter().map(arr).collect(),
            };
            out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::parse(origin, "empty motion file"))?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::parse(origin, format!("header: {e}")))?;
        if header.schema != MOTION_SCHEMA || header.version != MOTION_VERSION {
            return Err(Error::parse(
                origin,
                format!("expected schema {MOTION_SCHEMA} v{MOTION_VERSION}, got {} v{}", header.schema, header.version),
            ));
        }
        let skeleton = Skeleton::from_config(header.skeleton)?;
        let mut roots = Vec::with_capacity(header.frames);
        let mut rots = Vec::with_capacity(header.frames);
        let mut stored = Vec::with_capacity(header.frames);
        for (i, line) in lines {
            let rec: Frame = serde_json::from_str(line).map_err(|e| Error::parse(origin, format!("line {}: {e}", i + 1)))?;
            if rec.frame != roots.len() {
                return Err(Error::parse(origin, format!("line {}: frame {} out of order", i + 1, rec.frame)));
            }
            if rec.rotations.len() != skeleton.num_rotated() {
                return Err(Error::parse(
                    origin,
                    format!("line {}: {} rotations for {} rotated joints", i + 1, rec.rotations.len(), skeleton.num_rotated()),
                ));
            }
            roots.push(Vec3::from(rec.root));
            rots.push(rec.rotations.into_iter().map(Rotation6D).collect::<Vec<_>>());
            stored.push(rec.joints);
        }
        if roots.len() != header.frames {
            return Err(Error::parse(origin, format!("header declares {} frames, found {}", header.frames, roots.len())));
        }
        let poses = PoseSequence::new(&skeleton, roots, rots)?;
        for (t, joints) in stored.iter().enumerate() {
            let fk = &poses.positions()[t];
            if joints.len() != fk.len() || joints.iter().zip(fk).any(|(a, b)| (Vec3::from(*a) - b).norm() > JOINT_TOL) {
                return Err(Error::parse(origin, format!("frame {t}: joints disagree with forward kinematics")));
            }
        }
        Ok(Self {
            fps: header.fps,
            skeleton,
            poses,
            anchors: header.anchors,
            rectified: header.rectified,
        })
    }
}

pub fn write_motion(path: impl AsRef<Path>, motion: &MotionFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, motion.to_jsonl()?).map_err(|e| Error::io(path, e))
}

pub fn read_motion(path: impl AsRef<Path>) -> Result<MotionFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MotionFile::parse_jsonl(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{rot_y, Mat3};
    use crate::pipeline::Hand;

    fn sample() -> MotionFile {
        let skel = Skeleton::stick9();
        let rots: Vec<Vec<Rotation6D>> = (0..3)
            .map(|t| (0..6).map(|j| Rotation6D::from_matrix(&rot_y(0.1 * (t + j) as f64)).unwrap()).collect())
            .collect();
        let roots = (0..3).map(|t| Vec3::new(0.1 * t as f64, 0.0, 0.9)).collect();
        let poses = PoseSequence::new(&skel, roots, rots).unwrap();
        MotionFile {
            fps: 30.0,
            skeleton: skel,
            poses,
            anchors: vec![ContactAnchor {
                hand: Hand::Right,
                frame: 1,
                vertex: 7,
                offset: Vec3::new(0.01, 0.0, 0.0),
                rotation: Mat3::identity(),
            }],
            rectified: Some(true),
        }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let back = MotionFile::parse_jsonl(&m.to_jsonl().unwrap(), "mem").unwrap();
        assert_eq!(back.poses.flatten(), m.poses.flatten());
        assert_eq!(back.anchors, m.anchors);
        assert_eq!(back.rectified, Some(true));
    }

    #[test]
    fn rejects_inconsistent_joints() {
        let text = sample().to_jsonl().unwrap();
        let tampered: String = {
            let mut lines: Vec<String> = text.lines().map(String::from).collect();
            let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
            rec["joints"][0][0] = serde_json::json!(5.0);
            lines[1] = rec.to_string();
            lines.join("\n")
        };
        assert!(MotionFile::parse_jsonl(&tampered, "mem").is_err());
        assert!(MotionFile::parse_jsonl("", "mem").is_err());
    }
}
