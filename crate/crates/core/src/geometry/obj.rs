//! Wavefront OBJ subset: `v x y z` and triangular `f a b c` lines with
//! 1-based indices. Comments and grouping/material lines are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mathcore::Vec3;

use super::Mesh;

pub fn parse_obj(name: &str, text: &str, origin: &Path) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut tok = line.split_whitespace();
        let Some(tag) = tok.next() else { continue };
        let err = |msg: String| Error::parse(origin, format!("line {}: {msg}", lineno + 1));
        match tag {
            "v" => {
                let coords: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs 3 coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        match first.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(format!("bad face index {t:?} (1-based positive indices only)"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("face has {} vertices; only triangles are supported", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            t if t.starts_with('#') => {}
            "o" | "g" | "s" | "vn" | "vt" | "mtllib" | "usemtl" => {}
            other => return Err(err(format!("unsupported directive {other:?}"))),
        }
    }
    Mesh::new(name, vertices, faces).map_err(|e| Error::parse(origin, e))
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".into());
    parse_obj(&name, &text, path)
}

pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", mesh.name);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
