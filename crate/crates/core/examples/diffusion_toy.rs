//! A two-condition, one-dimensional diffusion model: condition -1 should
//! produce samples near -0.5 and condition +1 samples near 1.5.

use motionsynth::diffusion::{sample, ScheduleConfig, SequenceDataset, Trainer};
use motionsynth::nn::{AdamConfig, DenoiserConfig, DenoiserModel, Tensor, TransformerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> motionsynth::Result<()> {
    let targets = [(-1.0, -0.5), (1.0, 1.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spread = Normal::new(0.0, 0.05).expect("valid sigma");
    let (mut xs, mut cs) = (Vec::new(), Vec::new());
    for i in 0..64 {
        let (c, m) = targets[i % 2];
        xs.push(Tensor::from_vec(1, 1, vec![m + spread.sample(&mut rng)])?);
        cs.push(Tensor::from_vec(1, 1, vec![c])?);
    }
    let data = SequenceDataset::new(xs, cs)?;

    let config = DenoiserConfig {
        transformer: TransformerConfig {
            x_dim: 1,
            cond_dim: 1,
            d_model: 16,
            attn_dim: 16,
            heads: 2,
            layers: 1,
            ff_dim: 32,
            positional_encoding: false,
        },
        projector: None,
    };
    let schedule = ScheduleConfig::desk().build()?;
    let adam = AdamConfig {
        lr: 3e-3,
        ..AdamConfig::default()
    };
    let mut trainer = Trainer::new(DenoiserModel::new(config, 0)?, schedule.clone(), adam, 32, 1);
    for step in 1..=600 {
        let loss = trainer.step(&data)?;
        if step % 100 == 0 {
            println!("step {step:>4} loss {loss:.4}");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (c, m) in targets {
        let cond = Tensor::from_vec(200, 1, vec![c; 200])?;
        let x = sample(&trainer.model, &schedule, &cond, 1, 1, &mut rng)?;
        let mean = x.data().iter().sum::<f64>() / 200.0;
        println!("condition {c:+}: sample mean {mean:.3} (target {m})");
    }
    Ok(())
}
