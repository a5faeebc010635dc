use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::layers::Mlp;
use super::params::ParamStore;
use super::tensor::Tensor;
use super::transformer::{TransformerConfig, TransformerDenoiser};

/// Learned MLP applied to each frame's raw condition before it enters the
/// transformer (`raw_dim → hidden → out_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorConfig {
    pub raw_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub transformer: TransformerConfig,
    #[serde(default)]
    pub projector: Option<ProjectorConfig>,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        self.transformer.validate()?;
        if let Some(p) = &self.projector {
            if p.out_dim != self.transformer.cond_dim {
                return Err(Error::Config(format!(
                    "projector emits {} features but the transformer expects {}",
                    p.out_dim, self.transformer.cond_dim
                )));
            }
            if p.raw_dim == 0 || p.hidden == 0 {
                return Err(Error::Config("projector widths must be positive".into()));
            }
        }
        Ok(())
    }

    /// Per-frame width of the condition handed to [`DenoiserModel`].
    pub fn cond_input_dim(&self) -> usize {
        self.projector.as_ref().map_or(self.transformer.cond_dim, |p| p.raw_dim)
    }
}

/// Transformer denoiser plus optional condition projector, owning its
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: ParamStore,
    projector: Option<Mlp>,
    net: TransformerDenoiser,
}

impl DenoiserModel {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let projector = config
            .projector
            .as_ref()
            .map(|p| Mlp::new(&mut params, "projector", &[p.raw_dim, p.hidden, p.out_dim], &mut rng));
        let net = TransformerDenoiser::new(config.transformer.clone(), &mut params, "denoiser", &mut rng)?;
        Ok(Self {
            config,
            params,
            projector,
            net,
        })
    }

    /// Rebuilds the architecture from `config` and installs `params`.
    pub fn from_params(config: DenoiserConfig, params: &ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.params.load_from(params)?;
        Ok(model)
    }

    pub fn x_dim(&self) -> usize {
        self.config.transformer.x_dim
    }

    pub fn cond_input_dim(&self) -> usize {
        self.config.cond_input_dim()
    }

    fn project_var(&self, g: &mut Graph, params: &ParamStore, cond: Var) -> Result<Var> {
        match &self.projector {
            Some(p) => p.forward(g, params, cond),
            None => Ok(cond),
        }
    }

    /// Records the forward pass using `params` (normally `self.params`).
    pub fn forward_with(&self, g: &mut Graph, params: &ParamStore, x: Var, cond: Var, levels: &[usize], seq_len: usize) -> Result<Var> {
        let c = self.project_var(g, params, cond)?;
        self.net.forward(g, params, x, c, levels, seq_len)
    }

    pub fn forward(&self, g: &mut Graph, x: Var, cond: Var, levels: &[usize], seq_len: usize) -> Result<Var> {
        self.forward_with(g, &self.params, x, cond, levels, seq_len)
    }

    /// Inference-mode prediction of the clean sample.
    pub fn predict(&self, x: &Tensor, cond: &Tensor, levels: &[usize], seq_len: usize) -> Result<Tensor> {
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let cv = g.constant(cond.clone());
        let out = self.forward(&mut g, xv, cv, levels, seq_len)?;
        Ok(g.value(out).clone())
    }

    /// Condition after the projector (identity when there is none).
    pub fn project(&self, cond: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference();
        let cv = g.constant(cond.clone());
        let out = self.project_var(&mut g, &self.params, cv)?;
        Ok(g.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(projector: bool) -> DenoiserConfig {
        DenoiserConfig {
            transformer: TransformerConfig {
                x_dim: 6,
                cond_dim: 4,
                d_model: 8,
                attn_dim: 8,
                heads: 2,
                layers: 1,
                ff_dim: 16,
                positional_encoding: true,
            },
            projector: projector.then_some(ProjectorConfig {
                raw_dim: 9,
                hidden: 5,
                out_dim: 4,
            }),
        }
    }

    #[test]
    fn projector_changes_condition_width() {
        let m = DenoiserModel::new(config(true), 0).unwrap();
        assert_eq!(m.cond_input_dim(), 9);
        let out = m.predict(&Tensor::zeros(4, 6), &Tensor::zeros(4, 9), &[1, 2], 2).unwrap();
        assert_eq!(out.shape(), [4, 6]);
        assert_eq!(m.project(&Tensor::zeros(3, 9)).unwrap().shape(), [3, 4]);
        assert_eq!(DenoiserModel::new(config(false), 0).unwrap().cond_input_dim(), 4);
    }

    #[test]
    fn same_seed_same_params_and_reload() {
        let a = DenoiserModel::new(config(true), 11).unwrap();
        let b = DenoiserModel::new(config(true), 11).unwrap();
        assert_eq!(a.params, b.params);
        let c = DenoiserModel::from_params(config(true), &a.params).unwrap();
        assert_eq!(c.params, a.params);
        assert!(DenoiserModel::from_params(config(false), &a.params).is_err());
    }

    #[test]
    fn mismatched_projector_rejected() {
        let mut c = config(true);
        c.projector.as_mut().unwrap().out_dim = 5;
        assert!(DenoiserModel::new(c, 0).is_err());
    }
}
