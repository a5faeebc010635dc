//! Encodes a moving box with a 64-point basis and checks the deltas
//! against a brute-force nearest-vertex search.

use motionsynth::geometry::primitives::box_mesh;
use motionsynth::geometry::{compute_bps, nearest_vertex_brute_force, transform_mesh, BpsBasis, ObjectSequence};
use motionsynth::mathcore::{rot_z, RigidTransform, Vec3};
use motionsynth::pipeline::encode_object;

fn main() -> motionsynth::Result<()> {
    let mesh = box_mesh("box", Vec3::new(0.4, 0.3, 0.3), 0.05)?;
    let basis = BpsBasis::sample(64, 1.0, 0)?;
    println!("{} vertices, basis hash {}", mesh.vertices.len(), &basis.content_hash()[..16]);

    let transforms = (0..10)
        .map(|t| RigidTransform::new(rot_z(0.1 * t as f64), Vec3::new(0.05 * t as f64, 0.0, 0.5)))
        .collect();
    let seq = ObjectSequence::new(mesh, transforms, 30.0)?;
    let features = encode_object(&seq, &basis)?;
    println!("feature tensor {} x {} (3 + 3 * 64)", features.rows(), features.cols());

    let verts = transform_mesh(&seq, 9)?;
    let f = compute_bps(&basis, &verts)?;
    let mut worst = 0.0f64;
    for (b, d) in basis.points.iter().zip(&f.deltas) {
        let q = f.centroid + b;
        let (i, _) = nearest_vertex_brute_force(&verts, &q)?;
        worst = worst.max(((verts[i] - q) - d).norm());
    }
    println!("frame 9 centroid {:?}, max delta mismatch vs brute force {worst:e}", f.centroid.as_slice());
    Ok(())
}
