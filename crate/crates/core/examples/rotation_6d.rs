//! Round trip between rotation matrices and the 6D encoding, and what
//! Gram-Schmidt does with a perturbed 6D vector.

use motionsynth::mathcore::{axis_angle, matrix_to_sixd, rotation_deviation, sixd_to_matrix, Rotation6D, Vec3};

fn main() -> motionsynth::Result<()> {
    let r = axis_angle(&Vec3::new(1.0, 2.0, -0.5).normalize(), 2.3);
    let six = matrix_to_sixd(&r)?;
    let back = sixd_to_matrix(&six)?;
    println!("6D: {:?}", six.0);
    println!("round-trip error: {:.3e}", (back - r).abs().max());

    let mut noisy = six.0;
    for (i, v) in noisy.iter_mut().enumerate() {
        *v += 0.05 * ((i as f64) * 1.7).sin();
    }
    let fixed = Rotation6D(noisy).to_matrix()?;
    println!("noisy 6D -> rotation, orthonormality deviation {:.3e}", rotation_deviation(&fixed));
    println!("angle to original: {:.4} rad", (0.5 * ((r.transpose() * fixed).trace() - 1.0)).clamp(-1.0, 1.0).acos());

    match Rotation6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).to_matrix() {
        Err(e) => println!("parallel columns rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
