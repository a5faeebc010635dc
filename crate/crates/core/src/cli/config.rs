use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::ScheduleConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalSettings, SelectBy, COLLISION_THRESHOLD, CONTACT_THRESHOLD, FOOT_HEIGHT};
use crate::geometry::BpsBasis;
use crate::kinematics::ProxyConfig;
use crate::pipeline::{ModelDims, Stage, TrainSettings, RECTIFY_THRESHOLD};
use crate::synthdata::CorpusConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsConfig {
    pub points: usize,
    pub radius: f64,
    pub seed: u64,
}

impl BpsConfig {
    pub fn basis(&self) -> Result<BpsBasis> {
        BpsBasis::sample(self.points, self.radius, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rectify: f64,
    pub contact: f64,
    pub collision: f64,
    pub foot_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage1: TrainSettings,
    pub stage2: TrainSettings,
}

impl TrainConfig {
    pub fn for_stage(&self, stage: Stage) -> &TrainSettings {
        match stage {
            Stage::Hands => &self.stage1,
            Stage::FullBody => &self.stage2,
        }
    }

    pub fn for_stage_mut(&mut self, stage: Stage) -> &mut TrainSettings {
        match stage {
            Stage::Hands => &mut self.stage1,
            Stage::FullBody => &mut self.stage2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub best_of: usize,
    pub seed: u64,
    pub select_by: SelectBy,
    pub sdf_resolution: usize,
    pub proxy: ProxyConfig,
}

/// Everything a run depends on. Files may be partial: missing keys fall
/// back to the named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub corpus: CorpusConfig,
    pub bps: BpsConfig,
    pub model: ModelDims,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub thresholds: Thresholds,
    pub eval: EvalConfig,
}

pub const PRESETS: [&str; 2] = ["desk", "paper"];

impl RunConfig {
    pub fn desk() -> Self {
        let stage1 = TrainSettings {
            steps: 3000,
            ..TrainSettings::default()
        };
        let stage2 = TrainSettings {
            steps: 3000,
            seed: 1,
            ..TrainSettings::default()
        };
        Self {
            preset: "desk".into(),
            corpus: CorpusConfig::default(),
            bps: BpsConfig {
                points: 64,
                radius: 1.0,
                seed: 0,
            },
            model: ModelDims::desk(),
            schedule: ScheduleConfig::desk(),
            train: TrainConfig { stage1, stage2 },
            thresholds: Thresholds {
                rectify: RECTIFY_THRESHOLD,
                contact: CONTACT_THRESHOLD,
                collision: COLLISION_THRESHOLD,
                foot_height: FOOT_HEIGHT,
            },
            eval: EvalConfig {
                best_of: 20,
                seed: 0,
                select_by: SelectBy::Mpjpe,
                sdf_resolution: 24,
                proxy: ProxyConfig::default(),
            },
        }
    }

    /// Full-size model, 1000-step cosine schedule, 1024 basis points.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.preset = "paper".into();
        c.bps.points = 1024;
        c.model = ModelDims::paper();
        c.schedule = ScheduleConfig::paper_default();
        c.corpus.frames = 120;
        for t in [&mut c.train.stage1, &mut c.train.stage2] {
            t.steps = 200_000;
        }
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            _ => Err(Error::Config(format!("unknown preset {name:?} (expected one of {PRESETS:?})"))),
        }
    }

    /// Parses a (possibly partial) document over its preset, which is
    /// `preset` in the document, else `fallback_preset`.
    pub fn from_toml(text: &str, fallback_preset: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        let name = match doc.get("preset") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(v) => return Err(Error::Config(format!("preset must be a string, got {v}"))),
            None => fallback_preset.to_string(),
        };
        let mut base = toml::Table::try_from(Self::preset(&name)?).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, doc);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback_preset: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, fallback_preset).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.schedule.build()?;
        let t = &self.thresholds;
        for (name, v) in [
            ("rectify", t.rectify),
            ("contact", t.contact),
            ("collision", t.collision),
            ("foot_height", t.foot_height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("threshold {name} must be positive, got {v}")));
            }
        }
        if self.bps.points == 0 || !(self.bps.radius > 0.0) {
            return Err(Error::Config("bps needs at least one point and a positive radius".into()));
        }
        for (i, s) in [&self.train.stage1, &self.train.stage2].into_iter().enumerate() {
            if s.batch_size == 0 || s.log_every == 0 || !(s.lr > 0.0) {
                return Err(Error::Config(format!(
                    "stage {} training needs positive batch_size, log_every and lr",
                    i + 1
                )));
            }
        }
        self.eval_settings().validate()
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            best_of: self.eval.best_of,
            seed: self.eval.seed,
            select_by: self.eval.select_by,
            rectify_threshold: self.thresholds.rectify,
            contact_threshold: self.thresholds.contact,
            collision_threshold: self.thresholds.collision,
            foot_height: self.thresholds.foot_height,
            sdf_resolution: self.eval.sdf_resolution,
            proxy: self.eval.proxy,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
