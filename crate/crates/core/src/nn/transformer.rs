use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::layers::{sinusoidal_embedding, LayerNorm, Linear, Mlp};
use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub x_dim: usize,
    pub cond_dim: usize,
    pub d_model: usize,
    /// Width of the query/key/value projections (split across heads).
    pub attn_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub positional_encoding: bool,
}

impl TransformerConfig {
    /// Four blocks, four heads, 256-wide attention, 512-wide layers.
    pub fn paper_scale(x_dim: usize, cond_dim: usize) -> Self {
        Self {
            x_dim,
            cond_dim,
            d_model: 512,
            attn_dim: 256,
            heads: 4,
            layers: 4,
            ff_dim: 1024,
            positional_encoding: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_dim == 0 || self.d_model == 0 || self.layers == 0 || self.ff_dim == 0 {
            return Err(Error::Config(format!("degenerate transformer widths {self:?}")));
        }
        if self.heads == 0 || self.attn_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention width {} is not divisible by {} heads",
                self.attn_dim, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ln_attn: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

/// Pre-norm transformer encoder mapping per-frame `[x, c]` tokens plus a
/// noise-level embedding to an estimate of the clean sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerDenoiser {
    pub config: TransformerConfig,
    input: Linear,
    noise_mlp: Mlp,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    output: Linear,
}

impl TransformerDenoiser {
    pub fn new<R: Rng + ?Sized>(config: TransformerConfig, store: &mut ParamStore, name: &str, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let input = Linear::new(store, &format!("{name}.input"), c.x_dim + c.cond_dim, c.d_model, rng);
        let noise_mlp = Mlp::new(store, &format!("{name}.noise"), &[c.d_model, c.d_model, c.d_model], rng);
        let blocks = (0..c.layers)
            .map(|l| {
                let p = format!("{name}.block{l}");
                // Residual branches are scaled down so the stack starts near identity.
                let res_std = (1.0 / (2.0 * c.layers as f64 * c.attn_dim.max(c.ff_dim) as f64)).sqrt();
                Block {
                    ln_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), c.d_model),
                    q: Linear::new(store, &format!("{p}.q"), c.d_model, c.attn_dim, rng),
                    k: Linear::new(store, &format!("{p}.k"), c.d_model, c.attn_dim, rng),
                    v: Linear::new(store, &format!("{p}.v"), c.d_model, c.attn_dim, rng),
                    o: Linear::with_std(store, &format!("{p}.o"), c.attn_dim, c.d_model, res_std, rng),
                    ln_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), c.d_model),
                    ff_in: Linear::new(store, &format!("{p}.ff_in"), c.d_model, c.ff_dim, rng),
                    ff_out: Linear::with_std(store, &format!("{p}.ff_out"), c.ff_dim, c.d_model, res_std, rng),
                }
            })
            .collect();
        let final_norm = LayerNorm::new(store, &format!("{name}.final_norm"), c.d_model);
        let output = Linear::new(store, &format!("{name}.output"), c.d_model, c.x_dim, rng);
        Ok(Self {
            config,
            input,
            noise_mlp,
            blocks,
            final_norm,
            output,
        })
    }

    pub fn output_layer(&self) -> Linear {
        self.output
    }

    /// `x: (B·T) × x_dim`, `cond: (B·T) × cond_dim`, one noise level per
    /// sequence. Returns `(B·T) × x_dim`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, cond: Var, levels: &[usize], seq_len: usize) -> Result<Var> {
        let c = &self.config;
        let rows = g.value(x).rows();
        if g.value(x).cols() != c.x_dim || g.value(cond).shape() != [rows, c.cond_dim] {
            return Err(Error::ShapeMismatch(format!(
                "denoiser expects x (·, {}) and cond (·, {}), got {:?} and {:?}",
                c.x_dim,
                c.cond_dim,
                g.value(x).shape(),
                g.value(cond).shape()
            )));
        }
        if seq_len == 0 || levels.len() * seq_len != rows {
            return Err(Error::ShapeMismatch(format!(
                "{rows} rows do not split into {} sequences of {seq_len} frames",
                levels.len()
            )));
        }
        let tokens = if c.cond_dim > 0 { g.concat_cols(x, cond)? } else { x };
        let mut h = self.input.forward(g, store, tokens)?;

        let emb_rows: Vec<f64> = levels.iter().flat_map(|&n| sinusoidal_embedding(n as f64, c.d_model)).collect();
        let emb = g.constant(Tensor::from_vec(levels.len(), c.d_model, emb_rows)?);
        let emb = self.noise_mlp.forward(g, store, emb)?;
        h = g.add_seq_broadcast(h, emb, seq_len)?;

        if c.positional_encoding {
            let table: Vec<Vec<f64>> = (0..seq_len).map(|t| sinusoidal_embedding(t as f64, c.d_model)).collect();
            let pe = Tensor::from_fn(rows, c.d_model, |r, j| table[r % seq_len][j]);
            let pe = g.constant(pe);
            h = g.add(h, pe)?;
        }

        for b in &self.blocks {
            let n = b.ln_attn.forward(g, store, h)?;
            let q = b.q.forward(g, store, n)?;
            let k = b.k.forward(g, store, n)?;
            let v = b.v.forward(g, store, n)?;
            let a = g.attention(q, k, v, c.heads, seq_len)?;
            let a = b.o.forward(g, store, a)?;
            h = g.add(h, a)?;
            let n = b.ln_ff.forward(g, store, h)?;
            let f = b.ff_in.forward(g, store, n)?;
            let f = g.gelu(f);
            let f = b.ff_out.forward(g, store, f)?;
            h = g.add(h, f)?;
        }
        let h = self.final_norm.forward(g, store, h)?;
        self.output.forward(g, store, h)
    }
}
