//! Trained stage models, their training loop and checkpoint persistence.
//!
//! Stage 1 maps raw object features to wrist trajectories (`T × 6`); stage 2
//! maps wrist trajectories to flattened poses (`T × D`). Both work in a
//! ground-plane frame fixed at frame 0: the object frame for stage 1
//! (applied by the caller, see [`stage1_condition`](super::stage1_condition))
//! and the wrist heading frame for stage 2, applied here and undone after
//! sampling.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{self, Normalizer, NoiseSchedule, RngState, ScheduleConfig, SequenceDataset, Trainer};
use crate::error::{Error, Result};
use crate::geometry::{BpsBasis, ObjectSequence};
use crate::kinematics::{PoseSequence, Skeleton};
use crate::mathcore::Vec3;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{AdamConfig, AdamState, DenoiserConfig, DenoiserModel, ParamStore, ProjectorConfig, Tensor, TransformerConfig};

use super::{stage1_condition, HandTrajectory, PlanarFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Stage 1: object features → wrists.
    Hands,
    /// Stage 2: wrists → full body.
    FullBody,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Hands => 1,
            Stage::FullBody => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Stage::Hands),
            2 => Ok(Stage::FullBody),
            _ => Err(Error::Config(format!("stage must be 1 or 2, got {n}"))),
        }
    }
}

/// Denoiser widths shared by both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub projector_hidden: usize,
    pub projector_out: usize,
    pub positional_encoding: bool,
}

impl ModelDims {
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            attn_dim: 64,
            heads: 4,
            layers: 4,
            ff_dim: 128,
            projector_hidden: 128,
            projector_out: 64,
            positional_encoding: true,
        }
    }

    pub fn paper() -> Self {
        Self {
            d_model: 512,
            attn_dim: 256,
            heads: 4,
            layers: 4,
            ff_dim: 1024,
            projector_hidden: 512,
            projector_out: 256,
            positional_encoding: true,
        }
    }

    pub fn denoiser_config(&self, stage: Stage, x_dim: usize, raw_cond_dim: usize) -> DenoiserConfig {
        let projector = (stage == Stage::Hands).then(|| ProjectorConfig {
            raw_dim: raw_cond_dim,
            hidden: self.projector_hidden,
            out_dim: self.projector_out,
        });
        let cond_dim = projector.as_ref().map_or(raw_cond_dim, |p| p.out_dim);
        DenoiserConfig {
            transformer: TransformerConfig {
                x_dim,
                cond_dim,
                d_model: self.d_model,
                attn_dim: self.attn_dim,
                heads: self.heads,
                layers: self.layers,
                ff_dim: self.ff_dim,
                positional_encoding: self.positional_encoding,
            },
            projector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: u64,
    /// Fixed number of parallel gradient chunks (results do not depend on
    /// the worker count, only on this value).
    pub chunks: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            lr: 2e-4,
            seed: 0,
            log_every: 50,
            chunks: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub settings: TrainSettings,
    pub step: u64,
    pub rng: RngState,
    pub adam: AdamConfig,
}

/// JSON header of a stage checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub model: DenoiserConfig,
    pub schedule: ScheduleConfig,
    pub x_norm: Normalizer,
    pub cond_norm: Normalizer,
    pub basis: BpsBasis,
    pub skeleton: Skeleton,
    pub seq_len: usize,
    pub compat_hash: String,
    #[serde(default)]
    pub train: Option<TrainState>,
    #[serde(default)]
    pub config_echo: serde_json::Value,
}

/// Hash binding checkpoints that must be used together: the BPS basis and
/// the skeleton.
pub fn compat_hash(basis: &BpsBasis, skeleton: &Skeleton) -> String {
    let mut h = Sha256::new();
    h.update(b"compat-v1");
    h.update(basis.content_hash().as_bytes());
    h.update(serde_json::to_vec(&skeleton.to_config()).expect("skeleton serializes"));
    hex::encode(h.finalize())
}

/// Stage 1 inputs arrive already expressed in the object frame; stage 2
/// uses the heading frame of the wrists at frame 0.
fn reference_frame(stage: Stage, cond_raw: &Tensor) -> PlanarFrame {
    match stage {
        Stage::Hands => PlanarFrame::IDENTITY,
        Stage::FullBody => PlanarFrame::of_wrists(&triple(cond_raw, 0, 0), &triple(cond_raw, 0, 3)),
    }
}

fn triple(t: &Tensor, r: usize, c: usize) -> Vec3 {
    Vec3::new(t.get(r, c), t.get(r, c + 1), t.get(r, c + 2))
}

fn map_triples(t: &Tensor, triples: &[usize], f: impl Fn(&Vec3) -> Vec3) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        for &c in triples {
            let v = f(&triple(t, r, c));
            out.row_mut(r)[c..c + 3].copy_from_slice(v.as_slice());
        }
    }
    out
}

/// Rotation columns stored for the root (6D, two triples) when the root is rotated.
fn root_direction_triples(skel: &Skeleton) -> &'static [usize] {
    if skel.rotated().first() == Some(&0) {
        &[3, 6]
    } else {
        &[]
    }
}

fn x_to_frame(stage: Stage, skel: &Skeleton, frame: &PlanarFrame, x: &Tensor, to_local: bool) -> Tensor {
    if *frame == PlanarFrame::IDENTITY {
        return x.clone();
    }
    let point = |p: &Vec3| if to_local { frame.to_local(p) } else { frame.to_world(p) };
    match stage {
        Stage::Hands => map_triples(x, &[0, 3], point),
        Stage::FullBody => {
            let r = if to_local { frame.rotation().transpose() } else { frame.rotation() };
            let moved = map_triples(x, &[0], point);
            map_triples(&moved, root_direction_triples(skel), |d| r * d)
        }
    }
}

fn cond_to_local(stage: Stage, frame: &PlanarFrame, cond: &Tensor) -> Tensor {
    match stage {
        Stage::Hands => cond.clone(),
        Stage::FullBody => map_triples(cond, &[0, 3], |p| frame.to_local(p)),
    }
}

fn canonicalize(stage: Stage, skel: &Skeleton, x: &Tensor, cond: &Tensor) -> (Tensor, Tensor) {
    let f = reference_frame(stage, cond);
    (x_to_frame(stage, skel, &f, x, true), cond_to_local(stage, &f, cond))
}

/// Stage-1 training pairs: wrists (x) and object features (cond), both in
/// the object frame of each sequence.
pub fn build_stage1_dataset(samples: &[(&ObjectSequence, &PoseSequence)], skel: &Skeleton, basis: &BpsBasis) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let mut xs = Vec::with_capacity(samples.len());
    let mut cs = Vec::with_capacity(samples.len());
    for (obj, poses) in samples {
        if obj.len() != poses.len() {
            return Err(Error::ShapeMismatch("object and pose sequences differ in length".into()));
        }
        let (features, frame) = stage1_condition(obj, basis)?;
        xs.push(frame.hands_to_local(&HandTrajectory::from_poses(poses, skel)).to_tensor());
        cs.push(features);
    }
    Ok((xs, cs))
}

/// Stage-2 training pairs: flattened poses (x) and their own wrists (cond).
pub fn build_stage2_dataset(poses: &[&PoseSequence], skel: &Skeleton) -> (Vec<Tensor>, Vec<Tensor>) {
    poses
        .iter()
        .map(|p| (p.flatten(), HandTrajectory::from_poses(p, skel).to_tensor()))
        .unzip()
}

/// A trained (or training) stage ready for sampling.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub stage: Stage,
    pub model: DenoiserModel,
    pub schedule_config: ScheduleConfig,
    pub schedule: NoiseSchedule,
    pub x_norm: Normalizer,
    pub cond_norm: Normalizer,
    pub basis: BpsBasis,
    pub skeleton: Skeleton,
    pub seq_len: usize,
}

impl StageModel {
    pub fn compat_hash(&self) -> String {
        compat_hash(&self.basis, &self.skeleton)
    }

    pub fn x_dim(&self) -> usize {
        self.model.x_dim()
    }

    /// `count` independent draws for one raw condition sequence, returned
    /// denormalized in world coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, cond_raw: &Tensor, count: usize, rng: &mut R) -> Result<Vec<Tensor>> {
        if count == 0 {
            return Err(Error::Empty("sampling needs at least one draw"));
        }
        self.sample_batch(&vec![cond_raw.clone(); count], rng)
    }

    /// One draw per raw condition sequence, all sampled as one batch. All
    /// conditions must have the same number of frames.
    pub fn sample_batch<R: Rng + ?Sized>(&self, conds: &[Tensor], rng: &mut R) -> Result<Vec<Tensor>> {
        let first = conds.first().ok_or(Error::Empty("sampling needs at least one condition"))?;
        let t = first.rows();
        if t == 0 {
            return Err(Error::Empty("sampling needs frames"));
        }
        for c in conds {
            if c.cols() != self.cond_norm.dim() {
                return Err(Error::Incompatible(format!(
                    "condition has {} columns, checkpoint expects {}",
                    c.cols(),
                    self.cond_norm.dim()
                )));
            }
            if c.rows() != t {
                return Err(Error::ShapeMismatch(format!("conditions of {} and {t} frames in one batch", c.rows())));
            }
        }
        let frames: Vec<PlanarFrame> = conds.iter().map(|c| reference_frame(self.stage, c)).collect();
        let normalized = conds
            .iter()
            .zip(&frames)
            .map(|(c, f)| self.cond_norm.normalize(&cond_to_local(self.stage, f, c)))
            .collect::<Result<Vec<_>>>()?;
        let stacked = Tensor::vstack(&normalized.iter().collect::<Vec<_>>())?;
        let x = diffusion::sample(&self.model, &self.schedule, &stacked, self.x_dim(), t, rng)?;
        frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let part = self.x_norm.denormalize(&x.slice_rows(i * t, t))?;
                Ok(x_to_frame(self.stage, &self.skeleton, f, &part, false))
            })
            .collect()
    }

    pub fn from_checkpoint(ck: &Checkpoint<CheckpointMeta>) -> Result<Self> {
        let meta = &ck.meta;
        let expected = compat_hash(&meta.basis, &meta.skeleton);
        if expected != meta.compat_hash {
            return Err(Error::Incompatible(format!(
                "checkpoint hash {} does not match its own basis/skeleton ({expected})",
                meta.compat_hash
            )));
        }
        let params = ck.params_with_prefix("param.");
        let model = DenoiserModel::from_params(meta.model.clone(), &params)?;
        Ok(Self {
            stage: meta.stage,
            model,
            schedule: meta.schedule.build()?,
            schedule_config: meta.schedule.clone(),
            x_norm: meta.x_norm.clone(),
            cond_norm: meta.cond_norm.clone(),
            basis: meta.basis.clone(),
            skeleton: meta.skeleton.clone(),
            seq_len: meta.seq_len,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn meta(&self, train: Option<TrainState>, config_echo: serde_json::Value) -> CheckpointMeta {
        CheckpointMeta {
            stage: self.stage,
            model: self.model.config.clone(),
            schedule: self.schedule_config.clone(),
            x_norm: self.x_norm.clone(),
            cond_norm: self.cond_norm.clone(),
            basis: self.basis.clone(),
            skeleton: self.skeleton.clone(),
            seq_len: self.seq_len,
            compat_hash: self.compat_hash(),
            train,
            config_echo,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<CheckpointMeta> {
        Checkpoint {
            meta: self.meta(None, serde_json::Value::Null),
            tensors: param_tensors(&self.model.params),
        }
    }
}

fn param_tensors(params: &ParamStore) -> Vec<(String, Tensor)> {
    params.iter().map(|(_, n, t)| (format!("param.{n}"), t.clone())).collect()
}

/// Training loop state for one stage.
#[derive(Debug, Clone)]
pub struct StageTrainer {
    pub stage: Stage,
    pub settings: TrainSettings,
    pub trainer: Trainer,
    pub schedule_config: ScheduleConfig,
    pub x_norm: Normalizer,
    pub cond_norm: Normalizer,
    pub basis: BpsBasis,
    pub skeleton: Skeleton,
    pub data: SequenceDataset,
    pub config_echo: serde_json::Value,
}

impl StageTrainer {
    /// Fits normalizers on the (canonicalized) training data and
    /// initializes a fresh model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        stage: Stage,
        dims: &ModelDims,
        schedule_config: ScheduleConfig,
        settings: TrainSettings,
        x_raw: &[Tensor],
        cond_raw: &[Tensor],
        basis: BpsBasis,
        skeleton: Skeleton,
    ) -> Result<Self> {
        let (xs, cs) = canonical_pairs(stage, &skeleton, x_raw, cond_raw)?;
        let x_norm = Normalizer::fit(&xs)?;
        let cond_norm = Normalizer::fit(&cs)?;
        let data = normalized_dataset(&xs, &cs, &x_norm, &cond_norm)?;
        let config = dims.denoiser_config(stage, x_norm.dim(), cond_norm.dim());
        let model = DenoiserModel::new(config, settings.seed)?;
        let mut trainer = Trainer::new(
            model,
            schedule_config.build()?,
            AdamConfig {
                lr: settings.lr,
                ..AdamConfig::default()
            },
            settings.batch_size,
            settings.seed.wrapping_add(1),
        );
        trainer.chunks = settings.chunks.max(1);
        Ok(Self {
            stage,
            settings,
            trainer,
            schedule_config,
            x_norm,
            cond_norm,
            basis,
            skeleton,
            data,
            config_echo: serde_json::Value::Null,
        })
    }

    /// Restores a checkpoint written by [`StageTrainer::to_checkpoint`],
    /// including optimizer moments and the RNG position.
    pub fn resume(ck: &Checkpoint<CheckpointMeta>, x_raw: &[Tensor], cond_raw: &[Tensor]) -> Result<Self> {
        let stage_model = StageModel::from_checkpoint(ck)?;
        let meta = &ck.meta;
        let train = meta
            .train
            .clone()
            .ok_or_else(|| Error::Incompatible("checkpoint carries no training state".into()))?;
        let (xs, cs) = canonical_pairs(meta.stage, &meta.skeleton, x_raw, cond_raw)?;
        let data = normalized_dataset(&xs, &cs, &meta.x_norm, &meta.cond_norm)?;
        let mut adam = AdamState::new(train.adam, &stage_model.model.params);
        adam.step = train.step;
        let m = ck.params_with_prefix("adam.m.");
        let v = ck.params_with_prefix("adam.v.");
        if m.len() != adam.m.len() || v.len() != adam.v.len() {
            return Err(Error::Incompatible("optimizer moments do not match the model".into()));
        }
        for (i, ((_, _, mt), (_, _, vt))) in m.iter().zip(v.iter()).enumerate() {
            adam.m[i] = mt.clone();
            adam.v[i] = vt.clone();
        }
        let trainer = Trainer {
            model: stage_model.model,
            adam,
            schedule: stage_model.schedule,
            rng: train.rng.restore()?,
            batch_size: train.settings.batch_size.max(1),
            chunks: train.settings.chunks.max(1),
        };
        Ok(Self {
            stage: meta.stage,
            settings: train.settings,
            trainer,
            schedule_config: meta.schedule.clone(),
            x_norm: meta.x_norm.clone(),
            cond_norm: meta.cond_norm.clone(),
            basis: meta.basis.clone(),
            skeleton: meta.skeleton.clone(),
            data,
            config_echo: meta.config_echo.clone(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.trainer.step_count()
    }

    pub fn step(&mut self) -> Result<f64> {
        self.trainer.step(&self.data)
    }

    /// Trains until `settings.steps` total steps, reporting the mean loss
    /// of every `log_every` steps (and of the final partial interval).
    pub fn run(&mut self, mut on_log: impl FnMut(u64, f64)) -> Result<()> {
        let every = self.settings.log_every.max(1);
        let mut acc = 0.0;
        let mut count = 0u64;
        while self.step_count() < self.settings.steps {
            acc += self.step()?;
            count += 1;
            let s = self.step_count();
            if s % every == 0 || s == self.settings.steps {
                on_log(s, acc / count as f64);
                acc = 0.0;
                count = 0;
            }
        }
        Ok(())
    }

    pub fn model(&self) -> StageModel {
        StageModel {
            stage: self.stage,
            model: self.trainer.model.clone(),
            schedule_config: self.schedule_config.clone(),
            schedule: self.trainer.schedule.clone(),
            x_norm: self.x_norm.clone(),
            cond_norm: self.cond_norm.clone(),
            basis: self.basis.clone(),
            skeleton: self.skeleton.clone(),
            seq_len: self.data.seq_len,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<CheckpointMeta> {
        let model = self.model();
        let train = TrainState {
            settings: self.settings.clone(),
            step: self.trainer.adam.step,
            rng: RngState::capture(&self.trainer.rng),
            adam: self.trainer.adam.config,
        };
        let mut tensors = param_tensors(&model.model.params);
        for (i, (_, n, _)) in model.model.params.iter().enumerate() {
            tensors.push((format!("adam.m.{n}"), self.trainer.adam.m[i].clone()));
        }
        for (i, (_, n, _)) in model.model.params.iter().enumerate() {
            tensors.push((format!("adam.v.{n}"), self.trainer.adam.v[i].clone()));
        }
        Checkpoint {
            meta: model.meta(Some(train), self.config_echo.clone()),
            tensors,
        }
    }
}

fn canonical_pairs(stage: Stage, skel: &Skeleton, x_raw: &[Tensor], cond_raw: &[Tensor]) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    if x_raw.len() != cond_raw.len() || x_raw.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples with {} conditions",
            x_raw.len(),
            cond_raw.len()
        )));
    }
    Ok(x_raw.iter().zip(cond_raw).map(|(x, c)| canonicalize(stage, skel, x, c)).unzip())
}

fn normalized_dataset(xs: &[Tensor], cs: &[Tensor], xn: &Normalizer, cn: &Normalizer) -> Result<SequenceDataset> {
    let x = xs.iter().map(|t| xn.normalize(t)).collect::<Result<Vec<_>>>()?;
    let c = cs.iter().map(|t| cn.normalize(t)).collect::<Result<Vec<_>>>()?;
    SequenceDataset::new(x, c)
}
