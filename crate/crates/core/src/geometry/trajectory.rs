//! Object trajectory files: JSON Lines. The first record is a header
//!
//! ```text
//! {"schema":"object-trajectory","version":1,"fps":30.0,"frames":T}
//! ```
//!
//! followed by one record per frame, in order:
//!
//! ```text
//! {"frame":0,"rotation":[r00,r01,r02,r10,r11,r12,r20,r21,r22],"translation":[x,y,z]}
//! ```
//!
//! The rotation is row-major. Externally captured trajectories (for example
//! phone poses of a rigidly attached device) use the same layout.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{check_rotation, Mat3, RigidTransform, Vec3};

pub const TRAJECTORY_SCHEMA: &str = "object-trajectory";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    fps: f64,
    frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    frame: usize,
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub fps: f64,
    pub transforms: Vec<RigidTransform>,
}

pub fn to_jsonl(traj: &Trajectory) -> String {
    let mut out = String::new();
    let header = Header {
        schema: TRAJECTORY_SCHEMA.into(),
        version: TRAJECTORY_VERSION,
        fps: traj.fps,
        frames: traj.transforms.len(),
    };
    let _ = writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"));
    for (frame, t) in traj.transforms.iter().enumerate() {
        let r = &t.rotation;
        let rec = FrameRecord {
            frame,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"));
    }
    out
}

pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Header = serde_json::from_str(lines.next().ok_or_else(|| Error::parse(origin, "missing header"))?)
        .map_err(|e| Error::parse(origin, format!("header: {e}")))?;
    if header.schema != TRAJECTORY_SCHEMA {
        return Err(Error::parse(origin, format!("unexpected schema {:?}", header.schema)));
    }
    if header.version != TRAJECTORY_VERSION {
        return Err(Error::parse(origin, format!("unsupported version {}", header.version)));
    }
    let mut transforms = Vec::with_capacity(header.frames);
    for (i, line) in lines.enumerate() {
        let rec: FrameRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(origin, format!("frame record {i}: {e}")))?;
        if rec.frame != i {
            return Err(Error::parse(origin, format!("expected frame {i}, found {}", rec.frame)));
        }
        let rotation = Mat3::from_row_slice(&rec.rotation);
        check_rotation(&rotation).map_err(|e| Error::parse(origin, format!("frame {i}: {e}")))?;
        transforms.push(RigidTransform::new(rotation, Vec3::from(rec.translation)));
    }
    if transforms.len() != header.frames {
        return Err(Error::parse(
            origin,
            format!("header declares {} frames, found {}", header.frames, transforms.len()),
        ));
    }
    if transforms.is_empty() {
        return Err(Error::parse(origin, "trajectory has no frames"));
    }
    Ok(Trajectory { fps: header.fps, transforms })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, path)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, to_jsonl(traj)).map_err(|e| Error::io(path, e))
}
