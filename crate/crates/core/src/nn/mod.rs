//! Reverse-mode autodiff, transformer layers, Adam, and checkpoints.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod model;
mod params;
mod tensor;
mod transformer;

pub use adam::{AdamConfig, AdamState};
pub use graph::{softmax_in_place, Graph, Var, LAYER_NORM_EPS};
pub use layers::{sinusoidal_embedding, LayerNorm, Linear, Mlp};
pub use model::{DenoiserConfig, DenoiserModel, ProjectorConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
pub use transformer::{TransformerConfig, TransformerDenoiser};
