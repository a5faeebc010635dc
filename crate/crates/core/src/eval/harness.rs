//! Corpus-level evaluation of trained stages with best-of-s selection.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SdfField, SdfGrid};
use crate::kinematics::{PoseSequence, ProxyConfig, ProxySurface};
use crate::nn::Tensor;
use crate::pipeline::{check_compatible, rectify_contacts, sample_hands, HandTrajectory, StageModel, RECTIFY_THRESHOLD};
use crate::synthdata::DatasetRecord;

use super::report::markdown_header;
use super::{
    collision_percentage, contact_metrics, foot_sliding, hand_jpe, joint_errors, root_errors, MetricRow, COLLISION_THRESHOLD,
    CONTACT_THRESHOLD, FOOT_HEIGHT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Stage-1 hands, rectified, into stage 2.
    Rectified,
    /// Stage-1 hands straight into stage 2.
    Unrectified,
    /// Ground-truth hands into stage 2.
    GtHands,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Rectified, Variant::Unrectified, Variant::GtHands];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rectified => "rectified",
            Variant::Unrectified => "unrectified",
            Variant::GtHands => "gt-hands",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectBy {
    Mpjpe,
    HandJpe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub best_of: usize,
    pub seed: u64,
    pub select_by: SelectBy,
    pub rectify_threshold: f64,
    pub contact_threshold: f64,
    pub collision_threshold: f64,
    pub foot_height: f64,
    pub sdf_resolution: usize,
    pub proxy: ProxyConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            best_of: 20,
            seed: 0,
            select_by: SelectBy::Mpjpe,
            rectify_threshold: RECTIFY_THRESHOLD,
            contact_threshold: CONTACT_THRESHOLD,
            collision_threshold: COLLISION_THRESHOLD,
            foot_height: FOOT_HEIGHT,
            sdf_resolution: 24,
            proxy: ProxyConfig::default(),
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.best_of == 0 || self.sdf_resolution < 2 {
            return Err(Error::Config("best_of must be ≥ 1 and sdf_resolution ≥ 2".into()));
        }
        let th = [self.rectify_threshold, self.contact_threshold, self.collision_threshold, self.foot_height];
        if th.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config(format!("thresholds must be positive: {th:?}")));
        }
        Ok(())
    }
}

/// Independent stream per `(seed, record, purpose)`.
pub fn record_seed_rng(seed: u64, index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index as u64);
    rng
}

const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;

pub fn sample_stage1_hands(stage1: &StageModel, record: &DatasetRecord, draws: usize, rng: &mut ChaCha8Rng) -> Result<Vec<HandTrajectory>> {
    sample_hands(stage1, &record.object, draws, rng)
}

/// Training-set mean wrist trajectories: in world coordinates, and
/// relative to the object centroid's horizontal position at frame 0 (the
/// latter is placed at each test object's own frame-0 centroid).
#[derive(Debug, Clone, PartialEq)]
pub struct HandBaselines {
    pub world: Tensor,
    pub relative: Tensor,
}

fn centroid_xy(record: &DatasetRecord) -> Result<(f64, f64)> {
    let verts = crate::geometry::transform_mesh(&record.object, 0)?;
    let c = verts.iter().sum::<crate::mathcore::Vec3>() / verts.len() as f64;
    Ok((c.x, c.y))
}

fn shift_hands(t: &Tensor, dx: f64, dy: f64) -> Tensor {
    Tensor::from_fn(t.rows(), t.cols(), |r, c| {
        t.get(r, c)
            + match c % 3 {
                0 => dx,
                1 => dy,
                _ => 0.0,
            }
    })
}

pub fn hand_baselines(train: &[&DatasetRecord]) -> Result<HandBaselines> {
    let first = train.first().ok_or(Error::Empty("baseline needs training records"))?;
    let (t, c) = (first.hands.len(), 6);
    let mut world = Tensor::zeros(t, c);
    let mut relative = Tensor::zeros(t, c);
    for r in train {
        let h = r.hands.to_tensor();
        if h.rows() != t {
            return Err(Error::ShapeMismatch("training records differ in length".into()));
        }
        let (gx, gy) = centroid_xy(r)?;
        world.add_assign(&h);
        relative.add_assign(&shift_hands(&h, -gx, -gy));
    }
    let n = train.len() as f64;
    Ok(HandBaselines {
        world: world.map(|v| v / n),
        relative: relative.map(|v| v / n),
    })
}

impl HandBaselines {
    pub fn predict_relative(&self, record: &DatasetRecord) -> Result<HandTrajectory> {
        let (gx, gy) = centroid_xy(record)?;
        HandTrajectory::from_tensor(&shift_hands(&self.relative, gx, gy))
    }

    pub fn predict_world(&self) -> Result<HandTrajectory> {
        HandTrajectory::from_tensor(&self.world)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub best_of: usize,
    /// Mean over sequences of the best draw's wrist error (cm).
    pub best_hand_jpe: f64,
    /// Mean over sequences and draws (cm).
    pub mean_draw_hand_jpe: f64,
    /// Object-relative mean trajectory baseline (cm).
    pub baseline_hand_jpe: f64,
    /// World-coordinate mean trajectory baseline (cm).
    pub world_baseline_hand_jpe: f64,
    /// `1 − best / baseline`.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub id: String,
    pub selected_draw: usize,
    pub row: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub mean: MetricRow,
    pub sequences: Vec<SequenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: EvalSettings,
    pub num_sequences: usize,
    pub stage1: Stage1Report,
    pub variants: Vec<VariantReport>,
}

impl EvalReport {
    pub fn variant(&self, v: Variant) -> &VariantReport {
        self.variants.iter().find(|r| r.variant == v).expect("all variants are evaluated")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", markdown_header("Method"));
        for v in &self.variants {
            let _ = writeln!(out, "| {} | {} |", v.variant.name(), v.mean.markdown_cells());
        }
        let s = &self.stage1;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Stage 1 over {} sequences: best-of-{} Hand JPE {:.3} cm, mean draw {:.3} cm, \
             object-relative mean baseline {:.3} cm, world mean baseline {:.3} cm, improvement {:.1}%",
            self.num_sequences,
            s.best_of,
            s.best_hand_jpe,
            s.mean_draw_hand_jpe,
            s.baseline_hand_jpe,
            s.world_baseline_hand_jpe,
            100.0 * s.improvement
        );
        for v in &self.variants {
            let _ = writeln!(out, "\n### {}\n\n{}", v.variant.name(), markdown_header("Sequence"));
            for r in &v.sequences {
                let _ = writeln!(out, "| {} | {} |", r.id, r.row.markdown_cells());
            }
        }
        out
    }
}

struct RecordResult {
    best_hand: f64,
    mean_hand: f64,
    baseline: f64,
    world_baseline: f64,
    rows: Vec<SequenceRow>,
}

fn score_bodies(
    record: &DatasetRecord,
    bodies: &[PoseSequence],
    stage2: &StageModel,
    proxy: &ProxySurface,
    sdf: &SdfField,
    settings: &EvalSettings,
) -> Result<SequenceRow> {
    let skel = &stage2.skeleton;
    let mut best: Option<(usize, f64, super::JointErrors)> = None;
    for (i, body) in bodies.iter().enumerate() {
        let e = joint_errors(body, &record.poses, skel, proxy)?;
        let key = match settings.select_by {
            SelectBy::Mpjpe => e.mpjpe,
            SelectBy::HandJpe => e.hand_jpe,
        };
        if best.as_ref().is_none_or(|b| key < b.1) {
            best = Some((i, key, e));
        }
    }
    let (i, _, e) = best.ok_or(Error::Empty("no draws to select from"))?;
    let body = &bodies[i];
    let root = root_errors(body, &record.poses)?;
    let hands = HandTrajectory::from_poses(body, skel);
    let contact = contact_metrics(&hands, &record.hands, &record.object, settings.contact_threshold)?;
    Ok(SequenceRow {
        id: record.id.clone(),
        selected_draw: i,
        row: MetricRow {
            hand_jpe: e.hand_jpe,
            mpjpe: e.mpjpe,
            mpvpe: e.mpvpe,
            t_root: root.t_root,
            o_root: root.o_root,
            collision_pct: collision_percentage(body, skel, proxy, &record.object, sdf, settings.collision_threshold)?,
            fs: foot_sliding(body, skel, settings.foot_height),
            c_prec: contact.precision,
            c_rec: contact.recall,
            f1: contact.f1,
        },
    })
}

fn evaluate_record(
    record: &DatasetRecord,
    stage1: &StageModel,
    stage2: &StageModel,
    baselines: &HandBaselines,
    proxy: &ProxySurface,
    settings: &EvalSettings,
) -> Result<RecordResult> {
    let s = settings.best_of;
    let mut rng1 = record_seed_rng(settings.seed, record.index, STAGE1_STREAM);
    let draws = sample_stage1_hands(stage1, record, s, &mut rng1)?;
    let errs = draws.iter().map(|d| hand_jpe(d, &record.hands)).collect::<Result<Vec<_>>>()?;
    let best_hand = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_hand = errs.iter().sum::<f64>() / s as f64;
    let baseline = hand_jpe(&baselines.predict_relative(record)?, &record.hands)?;
    let world_baseline = hand_jpe(&baselines.predict_world()?, &record.hands)?;

    let sdf = SdfField::Grid(SdfGrid::bake(&record.object.mesh, settings.sdf_resolution, 0.1)?);
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for v in Variant::ALL {
        let conds: Vec<Tensor> = match v {
            Variant::Unrectified => draws.iter().map(HandTrajectory::to_tensor).collect(),
            Variant::Rectified => draws
                .iter()
                .map(|d| Ok(rectify_contacts(d, &record.object, settings.rectify_threshold)?.0.to_tensor()))
                .collect::<Result<_>>()?,
            Variant::GtHands => vec![record.hands.to_tensor(); s],
        };
        let mut rng2 = record_seed_rng(settings.seed, record.index, STAGE2_STREAM);
        let bodies = stage2
            .sample_batch(&conds, &mut rng2)?
            .iter()
            .map(|x| PoseSequence::unflatten(&stage2.skeleton, x))
            .collect::<Result<Vec<_>>>()?;
        rows.push(score_bodies(record, &bodies, stage2, proxy, &sdf, settings)?);
    }
    Ok(RecordResult {
        best_hand,
        mean_hand,
        baseline,
        world_baseline,
        rows,
    })
}

/// Runs every variant on `test`; baselines come from `train`. Sequences
/// are processed in parallel and aggregated in input order.
pub fn evaluate(test: &[&DatasetRecord], train: &[&DatasetRecord], stage1: &StageModel, stage2: &StageModel, settings: &EvalSettings) -> Result<EvalReport> {
    settings.validate()?;
    check_compatible(stage1, stage2)?;
    if test.is_empty() {
        return Err(Error::Empty("no test sequences"));
    }
    let baselines = hand_baselines(train)?;
    let proxy = ProxySurface::new(&stage2.skeleton, settings.proxy);
    let results = test
        .par_iter()
        .map(|r| evaluate_record(r, stage1, stage2, &baselines, &proxy, settings))
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&RecordResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let best_hand_jpe = mean(&|r| r.best_hand);
    let baseline_hand_jpe = mean(&|r| r.baseline);
    let stage1_report = Stage1Report {
        best_of: settings.best_of,
        best_hand_jpe,
        mean_draw_hand_jpe: mean(&|r| r.mean_hand),
        baseline_hand_jpe,
        world_baseline_hand_jpe: mean(&|r| r.world_baseline),
        improvement: 1.0 - best_hand_jpe / baseline_hand_jpe,
    };
    let variants = Variant::ALL
        .iter()
        .enumerate()
        .map(|(k, &variant)| {
            let sequences: Vec<SequenceRow> = results.iter().map(|r| r.rows[k].clone()).collect();
            let rows: Vec<MetricRow> = sequences.iter().map(|s| s.row).collect();
            VariantReport {
                variant,
                mean: MetricRow::mean(&rows),
                sequences,
            }
        })
        .collect();
    Ok(EvalReport {
        settings: settings.clone(),
        num_sequences: test.len(),
        stage1: stage1_report,
        variants,
    })
}
