use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mathcore::Vec3;

use super::nearest::NearestVertexIndex;

pub const DEFAULT_BPS_POINTS: usize = 1024;

/// Fixed basis points sampled uniformly from the volume of a ball centred
/// at the origin. The basis is drawn once per trained model and stored
/// with it; every encoding must use the same basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsBasis {
    pub points: Vec<Vec3>,
    pub radius: f64,
    pub seed: u64,
}

impl BpsBasis {
    pub fn sample(n_points: usize, radius: f64, seed: u64) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::Config("BPS basis needs at least one point".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config(format!("BPS radius must be positive, got {radius}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n_points)
            .map(|_| {
                let [x, y, z]: [f64; 3] = UnitBall.sample(&mut rng);
                Vec3::new(x, y, z) * radius
            })
            .collect();
        Ok(Self { points, radius, seed })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of the raw per-frame feature `[centroid, deltas]`.
    pub fn feature_len(&self) -> usize {
        3 + 3 * self.points.len()
    }

    /// Content hash over the exact bit patterns of the basis.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"bps-basis-v1");
        h.update(self.seed.to_le_bytes());
        h.update(self.radius.to_le_bytes());
        for p in &self.points {
            for c in p.iter() {
                h.update(c.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Per-frame encoding: the object centroid plus, for every basis point
/// placed around that centroid, the vector from the point to its nearest
/// mesh vertex (pointing toward the surface).
#[derive(Debug, Clone, PartialEq)]
pub struct BpsFeature {
    pub centroid: Vec3,
    pub deltas: Vec<Vec3>,
}

impl BpsFeature {
    /// Flattened `[g_x, g_y, g_z, d_0x, d_0y, d_0z, ...]`.
    pub fn to_raw(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + 3 * self.deltas.len());
        out.extend(self.centroid.iter());
        for d in &self.deltas {
            out.extend(d.iter());
        }
        out
    }
}

pub fn compute_bps(basis: &BpsBasis, verts: &[Vec3]) -> Result<BpsFeature> {
    if verts.is_empty() {
        return Err(Error::Empty("BPS encoding of an empty vertex list"));
    }
    let centroid = verts.iter().sum::<Vec3>() / verts.len() as f64;
    let index = NearestVertexIndex::build(verts)?;
    let deltas = basis
        .points
        .iter()
        .map(|b| {
            let q = centroid + b;
            let (i, _) = index.query(&q)?;
            Ok(verts[i] - q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BpsFeature { centroid, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn basis_inside_ball_and_reproducible() {
        let a = BpsBasis::sample(1024, 1.0, 42).unwrap();
        assert!(a.points.iter().all(|p| p.norm() <= 1.0));
        let b = BpsBasis::sample(1024, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), BpsBasis::sample(1024, 1.0, 43).unwrap().content_hash());
    }

    #[test]
    fn feature_lengths() {
        assert_eq!(BpsBasis::sample(1024, 1.0, 0).unwrap().feature_len(), 3075);
        assert_eq!(BpsBasis::sample(64, 1.0, 0).unwrap().feature_len(), 195);
    }

    #[test]
    fn single_vertex_delta() {
        let basis = BpsBasis {
            points: vec![Vec3::new(0.5, 0.0, 0.0)],
            radius: 1.0,
            seed: 0,
        };
        let f = compute_bps(&basis, &[Vec3::zeros()]).unwrap();
        assert_eq!(f.centroid, Vec3::zeros());
        assert_eq!(f.deltas[0], Vec3::new(-0.5, 0.0, 0.0));
    }

    #[test]
    fn coincident_basis_point_has_zero_delta() {
        let verts = vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)];
        let centroid = Vec3::new(0.0, 1.0, 0.0);
        let basis = BpsBasis {
            points: vec![verts[1] - centroid],
            radius: 2.0,
            seed: 0,
        };
        let f = compute_bps(&basis, &verts).unwrap();
        assert_eq!(f.deltas[0], Vec3::zeros());
    }

    #[test]
    fn empty_vertices_error() {
        let basis = BpsBasis::sample(4, 1.0, 0).unwrap();
        assert!(compute_bps(&basis, &[]).is_err());
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let basis = BpsBasis::sample(64, 1.0, 1).unwrap();
        let verts: Vec<Vec3> = (0..80)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let shift = Vec3::new(3.0, -2.0, 0.5);
        let moved: Vec<Vec3> = verts.iter().map(|v| v + shift).collect();
        let a = compute_bps(&basis, &verts).unwrap();
        let b = compute_bps(&basis, &moved).unwrap();
        assert!((b.centroid - a.centroid - shift).norm() < 1e-12);
        for (da, db) in a.deltas.iter().zip(&b.deltas) {
            assert!((da.norm() - db.norm()).abs() < 1e-9);
        }
    }
}
