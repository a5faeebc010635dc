//! Closed, outward-wound triangle meshes for the primitive shapes used by
//! the synthetic corpus and the tests. Object-local frames put the origin at
//! the bottom centre with +z up.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mathcore::Vec3;

use super::Mesh;

fn even_segments(length: f64, spacing: f64) -> usize {
    let n = (length / spacing).round() as usize;
    (n + n % 2).max(2)
}

/// Axis-aligned box of `size`, bottom face at z = 0, centred in x and y.
/// Every face is an even lattice so face centres are vertices.
pub fn box_mesh(name: &str, size: Vec3, spacing: f64) -> Result<Mesh> {
    if size.iter().any(|s| !(*s > 0.0)) || !(spacing > 0.0) {
        return Err(Error::InvalidMesh(format!("bad box size {size:?} / spacing {spacing}")));
    }
    let n = [0, 1, 2].map(|a| even_segments(size[a], spacing));
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |c: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(c).or_insert_with(|| {
            let p = Vec3::new(
                size.x * (c[0] as f64 / n[0] as f64 - 0.5),
                size.y * (c[1] as f64 / n[1] as f64 - 0.5),
                size.z * c[2] as f64 / n[2] as f64,
            );
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    for a in 0..3 {
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        for side in [0, n[a]] {
            for i in 0..n[u] {
                for j in 0..n[v] {
                    let corner = |di: usize, dj: usize| {
                        let mut c = [0usize; 3];
                        c[a] = side;
                        c[u] = i + di;
                        c[v] = j + dj;
                        c
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                    let q = q.map(|c| vid(c, &mut vertices));
                    if side == 0 {
                        faces.push([q[0], q[2], q[1]]);
                        faces.push([q[0], q[3], q[2]]);
                    } else {
                        faces.push([q[0], q[1], q[2]]);
                        faces.push([q[0], q[2], q[3]]);
                    }
                }
            }
        }
    }
    Mesh::new(name, vertices, faces)
}

/// Closed cylinder along +z from `z0` to `z0 + height`. The number of
/// segments around is a multiple of four so the ±x and ±y extremes are
/// vertices.
pub fn cylinder_mesh(name: &str, radius: f64, height: f64, z0: f64, spacing: f64) -> Result<Mesh> {
    if !(radius > 0.0 && height > 0.0 && spacing > 0.0) {
        return Err(Error::InvalidMesh(format!("bad cylinder r={radius} h={height}")));
    }
    let around = {
        let n = (2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize;
        (n.div_ceil(4) * 4).max(8)
    };
    let rings = ((height / spacing).round() as usize).max(1);
    let mut vertices = Vec::with_capacity(around * (rings + 1) + 2);
    for l in 0..=rings {
        let z = z0 + height * l as f64 / rings as f64;
        for m in 0..around {
            let th = 2.0 * std::f64::consts::PI * m as f64 / around as f64;
            vertices.push(Vec3::new(radius * th.cos(), radius * th.sin(), z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, z0));
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, z0 + height));
    let id = |m: usize, l: usize| l * around + (m % around);
    let mut faces = Vec::new();
    for l in 0..rings {
        for m in 0..around {
            faces.push([id(m, l), id(m + 1, l), id(m + 1, l + 1)]);
            faces.push([id(m, l), id(m + 1, l + 1), id(m, l + 1)]);
        }
    }
    for m in 0..around {
        faces.push([bottom, id(m + 1, 0), id(m, 0)]);
        faces.push([top, id(m, rings), id(m + 1, rings)]);
    }
    Mesh::new(name, vertices, faces)
}

/// Concatenates closed parts into one mesh (parts may overlap).
pub fn merge(name: &str, parts: &[Mesh]) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for part in parts {
        let off = vertices.len();
        vertices.extend_from_slice(&part.vertices);
        faces.extend(part.faces.iter().map(|f| f.map(|i| i + off)));
    }
    Mesh::new(name, vertices, faces)
}

/// Floor-lamp-like compound: base disc, thin pole, drum shade on top.
pub fn lamp_mesh(name: &str, base_radius: f64, pole_radius: f64, pole_height: f64, shade_radius: f64, spacing: f64) -> Result<Mesh> {
    let base = cylinder_mesh("base", base_radius, 0.04, 0.0, spacing)?;
    let pole = cylinder_mesh("pole", pole_radius, pole_height, 0.0, spacing)?;
    let shade = cylinder_mesh("shade", shade_radius, 0.2, pole_height, spacing)?;
    merge(name, &[base, pole, shade])
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(name: &str, radius: f64, subdivisions: usize) -> Result<Mesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    Mesh::new(name, vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::winding_number;

    #[test]
    fn primitives_are_closed_and_outward() {
        let meshes = [
            box_mesh("b", Vec3::new(0.4, 0.3, 0.5), 0.05).unwrap(),
            cylinder_mesh("c", 0.2, 0.6, 0.0, 0.05).unwrap(),
            icosphere("s", 1.0, 2).unwrap(),
        ];
        for m in &meshes {
            let (lo, hi) = m.bounds();
            let inside = (lo + hi) * 0.5;
            assert!((winding_number(m, &inside) - 1.0).abs() < 1e-9, "{}", m.name);
            let outside = hi + Vec3::repeat(1.0);
            assert!(winding_number(m, &outside).abs() < 1e-9, "{}", m.name);
        }
    }

    #[test]
    fn box_face_centres_are_vertices() {
        let m = box_mesh("b", Vec3::new(0.4, 0.3, 0.5), 0.05).unwrap();
        for target in [Vec3::new(0.0, 0.15, 0.25), Vec3::new(-0.2, 0.0, 0.25), Vec3::new(0.0, 0.0, 0.5)] {
            assert!(m.vertices.iter().any(|v| (v - target).norm() < 1e-12), "{target:?}");
        }
    }

    #[test]
    fn icosphere_counts() {
        let m = icosphere("s", 1.0, 3).unwrap();
        assert_eq!(m.vertices.len(), 642);
        assert_eq!(m.faces.len(), 1280);
    }
}
