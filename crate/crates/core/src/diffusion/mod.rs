//! Conditional DDPM with x0-prediction: noise schedules, the closed-form
//! forward process, the posterior mean used by the reverse step, the
//! ancestral sampler and the L1 training step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, DenoiserModel, Graph, ParamId, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Linear { start: f64, end: f64 },
    /// Squared-cosine ᾱ curve with a small offset, β clipped at 0.999.
    Cosine { offset: f64 },
    Explicit { betas: Vec<f64> },
}

/// Reverse-step variance σ_n².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// σ_n² = β_n.
    #[default]
    Beta,
    /// σ_n² = β̃_n = β_n (1 − ᾱ_{n−1}) / (1 − ᾱ_n).
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub betas: BetaSchedule,
    #[serde(default)]
    pub variance: VarianceKind,
}

impl ScheduleConfig {
    /// 1000-step cosine schedule.
    pub fn paper_default() -> Self {
        Self {
            steps: 1000,
            betas: BetaSchedule::Cosine { offset: 0.008 },
            variance: VarianceKind::Beta,
        }
    }

    /// 50 steps, linear β from 0.002 to 0.4 (the usual 1e-4..0.02 range
    /// rescaled by 1000 / 50 so that ᾱ_N reaches pure noise).
    pub fn desk() -> Self {
        Self {
            steps: 50,
            betas: BetaSchedule::Linear { start: 0.002, end: 0.4 },
            variance: VarianceKind::Beta,
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        let n = self.steps;
        if n == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        let betas = match &self.betas {
            BetaSchedule::Linear { start, end } => (0..n)
                .map(|i| if n == 1 { *start } else { start + (end - start) * i as f64 / (n - 1) as f64 })
                .collect(),
            BetaSchedule::Cosine { offset } => {
                let f = |t: f64| (((t / n as f64 + offset) / (1.0 + offset)) * std::f64::consts::FRAC_PI_2).cos().powi(2);
                (1..=n).map(|i| (1.0 - f(i as f64) / f(i as f64 - 1.0)).clamp(1e-8, 0.999)).collect()
            }
            BetaSchedule::Explicit { betas } => {
                if betas.len() != n {
                    return Err(Error::Config(format!("{} explicit betas for {n} steps", betas.len())));
                }
                betas.clone()
            }
        };
        NoiseSchedule::new(betas, self.variance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    /// `alpha_bars[n]` for n = 0..=N, with ᾱ_0 = 1.
    alpha_bars: Vec<f64>,
    pub variance: VarianceKind,
}

impl NoiseSchedule {
    /// `betas[n − 1]` is β_n. Each β must lie in [0, 1).
    pub fn new(betas: Vec<f64>, variance: VarianceKind) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("empty β schedule".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b >= 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("β = {b} outside [0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for a in &alphas {
            alpha_bars.push(alpha_bars.last().unwrap() * a);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            variance,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.steps() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.steps() + 1,
            });
        }
        Ok(())
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n - 1]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alphas[n - 1]
    }

    pub fn alpha_bar(&self, n: usize) -> f64 {
        self.alpha_bars[n]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Standard deviation of the reverse step at level `n`.
    pub fn sigma(&self, n: usize) -> f64 {
        match self.variance {
            VarianceKind::Beta => self.beta(n).sqrt(),
            VarianceKind::Posterior => {
                let denom = 1.0 - self.alpha_bar(n);
                if denom <= 0.0 {
                    0.0
                } else {
                    (self.beta(n) * (1.0 - self.alpha_bar(n - 1)) / denom).sqrt()
                }
            }
        }
    }

    /// x_n = √ᾱ_n x0 + √(1 − ᾱ_n) ε for a given ε.
    pub fn forward_noise_with(&self, x0: &Tensor, n: usize, eps: &Tensor) -> Result<Tensor> {
        self.check(n)?;
        let (a, b) = (self.alpha_bar(n).sqrt(), (1.0 - self.alpha_bar(n)).sqrt());
        x0.zip_map(eps, |x, e| a * x + b * e)
    }

    pub fn forward_noise<R: Rng + ?Sized>(&self, x0: &Tensor, n: usize, rng: &mut R) -> Result<Tensor> {
        let eps = standard_normal(x0.rows(), x0.cols(), rng);
        self.forward_noise_with(x0, n, &eps)
    }

    /// One Markov step q(x_n | x_{n−1}).
    pub fn single_step_noise<R: Rng + ?Sized>(&self, x_prev: &Tensor, n: usize, rng: &mut R) -> Result<Tensor> {
        self.check(n)?;
        let (a, b) = (self.alpha(n).sqrt(), self.beta(n).sqrt());
        let eps = standard_normal(x_prev.rows(), x_prev.cols(), rng);
        x_prev.zip_map(&eps, |x, e| a * x + b * e)
    }

    /// Mean of p(x_{n−1} | x_n) given the clean-sample estimate:
    /// μ = (√α_n (1 − ᾱ_{n−1}) x_n + √ᾱ_{n−1} (1 − α_n) x̂_0) / (1 − ᾱ_n).
    /// When 1 − ᾱ_n = 0 (no noise has been added) μ = x̂_0.
    pub fn posterior_mean(&self, x_n: &Tensor, x0_hat: &Tensor, n: usize) -> Result<Tensor> {
        self.check(n)?;
        let denom = 1.0 - self.alpha_bar(n);
        if denom <= 0.0 {
            x_n.expect_same_shape(x0_hat)?;
            return Ok(x0_hat.clone());
        }
        let cx = self.alpha(n).sqrt() * (1.0 - self.alpha_bar(n - 1)) / denom;
        let c0 = self.alpha_bar(n - 1).sqrt() * (1.0 - self.alpha(n)) / denom;
        x_n.zip_map(x0_hat, |x, h| cx * x + c0 * h)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Anything that predicts the clean sample from `(x_n, n, c)` for a batch
/// of equal-length sequences stacked row-wise.
pub trait Denoiser {
    fn denoise(&self, x_n: &Tensor, cond: &Tensor, levels: &[usize], seq_len: usize) -> Result<Tensor>;
}

impl Denoiser for DenoiserModel {
    fn denoise(&self, x_n: &Tensor, cond: &Tensor, levels: &[usize], seq_len: usize) -> Result<Tensor> {
        self.predict(x_n, cond, levels, seq_len)
    }
}

impl<F> Denoiser for F
where
    F: Fn(&Tensor, &Tensor, &[usize], usize) -> Result<Tensor>,
{
    fn denoise(&self, x_n: &Tensor, cond: &Tensor, levels: &[usize], seq_len: usize) -> Result<Tensor> {
        self(x_n, cond, levels, seq_len)
    }
}

/// Ancestral sampling: x^N ~ N(0, I), then x^{n−1} = μ_θ + σ_n z with z = 0
/// at n = 1. `cond` has `n_seq · seq_len` rows; returns that many rows of
/// width `x_dim`.
pub fn sample<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &D,
    schedule: &NoiseSchedule,
    cond: &Tensor,
    x_dim: usize,
    seq_len: usize,
    rng: &mut R,
) -> Result<Tensor> {
    sample_with_sigma(model, schedule, cond, x_dim, seq_len, rng, |n| schedule.sigma(n))
}

/// [`sample`] with an explicit reverse-step standard deviation per level.
pub fn sample_with_sigma<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &D,
    schedule: &NoiseSchedule,
    cond: &Tensor,
    x_dim: usize,
    seq_len: usize,
    rng: &mut R,
    sigma: impl Fn(usize) -> f64,
) -> Result<Tensor> {
    if seq_len == 0 || cond.rows() % seq_len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} condition rows are not whole sequences of {seq_len}",
            cond.rows()
        )));
    }
    let n_seq = cond.rows() / seq_len;
    let mut x = standard_normal(cond.rows(), x_dim, rng);
    for n in (1..=schedule.steps()).rev() {
        let levels = vec![n; n_seq];
        let x0_hat = model.denoise(&x, cond, &levels, seq_len)?;
        let mu = schedule.posterior_mean(&x, &x0_hat, n)?;
        x = if n > 1 {
            let s = sigma(n);
            let z = standard_normal(mu.rows(), mu.cols(), rng);
            mu.zip_map(&z, |m, e| m + s * e)?
        } else {
            mu
        };
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("sample diverged at noise level {n}")));
        }
    }
    Ok(x)
}

/// Per-dimension affine normalization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub const MIN_STD: f64 = 1e-6;

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Dimensions with standard deviation below [`Self::MIN_STD`] get std 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for t in rows {
            if sum.is_empty() {
                sum = vec![0.0; t.cols()];
                sq = vec![0.0; t.cols()];
            } else if t.cols() != sum.len() {
                return Err(Error::ShapeMismatch("normalizer rows of differing width".into()));
            }
            for r in 0..t.rows() {
                for (c, v) in t.row(r).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            count += t.rows();
        }
        if count == 0 {
            return Err(Error::Empty("normalizer fitted on no rows"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let s = (q / n - m * m).max(0.0).sqrt();
                if s < Self::MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, t: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        Ok(Tensor::from_fn(t.rows(), t.cols(), |r, c| (t.get(r, c) - self.mean[c]) / self.std[c]))
    }

    pub fn denormalize(&self, t: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        Ok(Tensor::from_fn(t.rows(), t.cols(), |r, c| t.get(r, c) * self.std[c] + self.mean[c]))
    }

    fn check(&self, t: &Tensor) -> Result<()> {
        if t.cols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "normalizer of width {} applied to {} columns",
                self.dim(),
                t.cols()
            )));
        }
        Ok(())
    }
}

/// Mean L1 reconstruction loss and parameter gradients, computed over
/// `chunks` groups of sequences in parallel and reduced in chunk order.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grads(
    model: &DenoiserModel,
    x_n: &Tensor,
    cond: &Tensor,
    levels: &[usize],
    x0: &Tensor,
    seq_len: usize,
    chunks: usize,
) -> Result<(f64, Vec<(ParamId, Tensor)>)> {
    let n_seq = levels.len();
    if n_seq == 0 {
        return Err(Error::Empty("training batch"));
    }
    if x_n.rows() != n_seq * seq_len || cond.rows() != x_n.rows() {
        return Err(Error::ShapeMismatch(format!(
            "batch of {n_seq} sequences × {seq_len} frames with {} / {} rows",
            x_n.rows(),
            cond.rows()
        )));
    }
    x_n.expect_same_shape(x0)?;
    let chunks = chunks.clamp(1, n_seq);
    let per = n_seq.div_ceil(chunks);
    let ranges: Vec<(usize, usize)> = (0..n_seq).step_by(per).map(|s| (s, per.min(n_seq - s))).collect();
    let total = x0.len() as f64;
    let parts = ranges
        .par_iter()
        .map(|&(s, count)| -> Result<(f64, Vec<(ParamId, Tensor)>)> {
            let rows = (s * seq_len, count * seq_len);
            let mut g = Graph::new();
            let xv = g.constant(x_n.slice_rows(rows.0, rows.1));
            let cv = g.constant(cond.slice_rows(rows.0, rows.1));
            let target = x0.slice_rows(rows.0, rows.1);
            let out = model.forward(&mut g, xv, cv, &levels[s..s + count], seq_len)?;
            let l = g.l1_loss(out, &target)?;
            let l = g.scale(l, target.len() as f64 / total);
            g.backward(l)?;
            Ok((g.value(l).item(), g.param_grads()))
        })
        .collect::<Vec<_>>();
    let mut loss = 0.0;
    let mut grads: Vec<(ParamId, Tensor)> = Vec::new();
    for part in parts {
        let (l, gs) = part?;
        loss += l;
        if grads.is_empty() {
            grads = gs;
        } else {
            for ((ia, ga), (ib, gb)) in grads.iter_mut().zip(&gs) {
                debug_assert_eq!(ia, ib);
                ga.add_assign(gb);
            }
        }
    }
    Ok((loss, grads))
}

/// Equal-length training sequences with per-frame conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub x: Vec<Tensor>,
    pub cond: Vec<Tensor>,
    pub seq_len: usize,
}

impl SequenceDataset {
    pub fn new(x: Vec<Tensor>, cond: Vec<Tensor>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        if x.len() != cond.len() {
            return Err(Error::ShapeMismatch(format!("{} samples but {} conditions", x.len(), cond.len())));
        }
        let seq_len = x[0].rows();
        let (xd, cd) = (x[0].cols(), cond[0].cols());
        for (a, c) in x.iter().zip(&cond) {
            if a.rows() != seq_len || c.rows() != seq_len || a.cols() != xd || c.cols() != cd {
                return Err(Error::ShapeMismatch("dataset sequences must share length and widths".into()));
            }
        }
        Ok(Self { x, cond, seq_len })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Serializable snapshot of a ChaCha8 stream position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Config(format!("RNG seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Config("RNG seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Config(format!("RNG position: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Single-writer training loop state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: DenoiserModel,
    pub adam: AdamState,
    pub schedule: NoiseSchedule,
    pub rng: ChaCha8Rng,
    pub batch_size: usize,
    pub chunks: usize,
}

impl Trainer {
    pub fn new(model: DenoiserModel, schedule: NoiseSchedule, adam: AdamConfig, batch_size: usize, seed: u64) -> Self {
        let adam = AdamState::new(adam, &model.params);
        Self {
            model,
            adam,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_size: batch_size.max(1),
            chunks: 4,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// One optimization step on an explicit batch (rows already
    /// normalized). Noise levels are drawn uniformly per sequence.
    pub fn step_on_batch(&mut self, x0: &Tensor, cond: &Tensor, seq_len: usize) -> Result<f64> {
        if seq_len == 0 || x0.rows() % seq_len != 0 {
            return Err(Error::ShapeMismatch(format!("{} rows with sequence length {seq_len}", x0.rows())));
        }
        let n_seq = x0.rows() / seq_len;
        let levels: Vec<usize> = (0..n_seq).map(|_| self.rng.random_range(1..=self.schedule.steps())).collect();
        let mut x_n = Tensor::zeros(x0.rows(), x0.cols());
        for (s, &n) in levels.iter().enumerate() {
            let part = self
                .schedule
                .forward_noise(&x0.slice_rows(s * seq_len, seq_len), n, &mut self.rng)?;
            x_n.data_mut()[s * seq_len * x0.cols()..(s + 1) * seq_len * x0.cols()].copy_from_slice(part.data());
        }
        let (loss, grads) = loss_and_grads(&self.model, &x_n, cond, &levels, x0, seq_len, self.chunks)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {loss} at step {} (levels {levels:?})",
                self.adam.step + 1
            )));
        }
        self.adam.step(&mut self.model.params, &grads)?;
        Ok(loss)
    }

    /// Draws `batch_size` sequences uniformly with replacement and steps.
    pub fn step(&mut self, data: &SequenceDataset) -> Result<f64> {
        let picks: Vec<usize> = (0..self.batch_size).map(|_| self.rng.random_range(0..data.len())).collect();
        let xs: Vec<&Tensor> = picks.iter().map(|&i| &data.x[i]).collect();
        let cs: Vec<&Tensor> = picks.iter().map(|&i| &data.cond[i]).collect();
        let x0 = Tensor::vstack(&xs)?;
        let cond = Tensor::vstack(&cs)?;
        self.step_on_batch(&x0, &cond, data.seq_len)
    }
}
