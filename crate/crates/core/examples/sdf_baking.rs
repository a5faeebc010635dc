//! Bakes a grid SDF from an icosphere and compares it with the analytic
//! sphere distance.

use motionsynth::geometry::primitives::icosphere;
use motionsynth::geometry::{SdfField, SdfGrid};
use motionsynth::mathcore::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> motionsynth::Result<()> {
    let mesh = icosphere("ball", 0.3, 3)?;
    let grid = SdfGrid::bake(&mesh, 32, 0.1)?;
    let spacing = grid.spacing;
    let oracle = SdfField::Sphere {
        center: Vec3::zeros(),
        radius: 0.3,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = Vec3::from_fn(|_, _| rng.random_range(-0.35..0.35));
        worst = worst.max((grid.query(&p) - oracle.query(&p)).abs());
    }
    println!("grid {:?}, spacing {spacing:.4} m", grid.dims);
    println!("max |grid - analytic| over 1000 points: {worst:.4} m ({:.2} spacings)", worst / spacing);
    println!("centre {:.3}, surface {:.3}, outside {:.3}", grid.query(&Vec3::zeros()), grid.query(&Vec3::new(0.3, 0.0, 0.0)), grid.query(&Vec3::new(0.4, 0.0, 0.0)));
    Ok(())
}
