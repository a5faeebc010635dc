//! Command-line front end: `gen-data`, `train`, `pipeline`, `evaluate`.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration, 3 I/O or
//! malformed input file, 4 non-finite values, 5 incompatible checkpoints.

mod config;

pub use config::{BpsConfig, EvalConfig, RunConfig, Thresholds, TrainConfig, PRESETS};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::geometry::obj::read_obj;
use crate::geometry::trajectory::read_trajectory;
use crate::geometry::ObjectSequence;
use crate::pipeline::{
    build_stage1_dataset, build_stage2_dataset, run_pipeline, write_motion, MotionFile, PipelineOptions, Stage, StageModel, StageTrainer,
};
use crate::nn::checkpoint::Checkpoint;
use crate::synthdata::{build_corpus, load_corpus, Manifest, Split, SplitScheme};

pub const CONFIG_ECHO: &str = "run_config.toml";

#[derive(Debug, Parser)]
#[command(name = "motionsynth", version, about = "Object motion to full-body manipulation motion")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration (may be partial).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset for keys the config file leaves out.
    #[arg(long, global = true, default_value = "desk")]
    pub preset: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and write a synthetic corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_family: Option<usize>,
    },
    /// Train one stage on the corpus training split.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint written by an earlier `train`.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Subject)]
        scheme: SchemeArg,
    },
    /// Synthesize a motion for one object trajectory.
    Pipeline {
        #[arg(long)]
        object_trajectory: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_rectify: bool,
    },
    /// Compare rectified, unrectified and gt-hands variants on a split.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        best_of: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Subject)]
        scheme: SchemeArg,
        /// Evaluate only the first N sequences of the split.
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Subject,
    Object,
}

impl From<SchemeArg> for SplitScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Subject => SplitScheme::Subject,
            SchemeArg::Object => SplitScheme::Object,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidSkeleton(_) => 2,
        Error::Io { .. } | Error::Parse { .. } | Error::InvalidMesh(_) | Error::MalformedGrid(_) => 3,
        Error::NonFinite(_) => 4,
        Error::Incompatible(_) => 5,
        _ => 1,
    }
}

fn effective_config(common: &CommonArgs) -> Result<RunConfig> {
    match &common.config {
        Some(p) => {
            require_exists(p)?;
            RunConfig::load(p, &common.preset)
        }
        None => {
            let c = RunConfig::preset(&common.preset)?;
            c.validate()?;
            Ok(c)
        }
    }
}

fn require_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

fn require_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => require_exists(parent),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(dir: &Path, name: &str, config: &RunConfig) -> Result<()> {
    write_file(&dir.join(name), config.to_toml())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    require_parent(dir)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct LossRecord {
    stage: u8,
    step: u64,
    loss: f64,
}

/// Runs one parsed invocation, writing progress to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let mut config = effective_config(&cli.common)?;
    match cli.command {
        Command::GenData { out: dir, seed, per_family } => {
            if let Some(s) = seed {
                config.corpus.seed = s;
            }
            if let Some(n) = per_family {
                config.corpus.per_family = n;
            }
            config.validate()?;
            let manifest = build_corpus(&config.corpus, &dir)?;
            echo_config(&dir, CONFIG_ECHO, &config)?;
            print_manifest(out, &dir, &manifest)?;
        }
        Command::Train {
            stage,
            corpus,
            out: dir,
            steps,
            seed,
            resume,
            scheme,
        } => {
            let stage = Stage::from_number(stage)?;
            let settings = config.train.for_stage_mut(stage);
            if let Some(s) = steps {
                settings.steps = s;
            }
            if let Some(s) = seed {
                settings.seed = s;
            }
            config.validate()?;
            require_exists(&corpus)?;
            if let Some(r) = &resume {
                require_exists(r)?;
            }
            ensure_dir(&dir)?;
            train_stage(&config, stage, &corpus, &dir, resume.as_deref(), scheme.into(), out)?;
        }
        Command::Pipeline {
            object_trajectory,
            mesh,
            stage1,
            stage2,
            out: path,
            seed,
            no_rectify,
        } => {
            for p in [&object_trajectory, &mesh, &stage1, &stage2] {
                require_exists(p)?;
            }
            require_parent(&path)?;
            let traj = read_trajectory(&object_trajectory)?;
            let seq = ObjectSequence::new(read_obj(&mesh)?, traj.transforms, traj.fps)?;
            let s1 = StageModel::load(&stage1)?;
            let s2 = StageModel::load(&stage2)?;
            let result = run_pipeline(
                &seq,
                &s1,
                &s2,
                PipelineOptions {
                    seed,
                    rectify: !no_rectify,
                    threshold: config.thresholds.rectify,
                },
            )?;
            let motion = MotionFile {
                fps: seq.fps,
                skeleton: s2.skeleton.clone(),
                poses: result.poses,
                anchors: result.anchors,
                rectified: Some(!no_rectify),
            };
            write_motion(&path, &motion)?;
            let echo = path.with_extension("config.toml");
            write_file(&echo, config.to_toml())?;
            log_line(out, &format!("wrote {} ({} frames)", path.display(), seq.len()))?;
            for a in &motion.anchors {
                log_line(out, &format!("anchor {:?} at frame {} on vertex {}", a.hand, a.frame, a.vertex))?;
            }
        }
        Command::Evaluate {
            corpus,
            stage1,
            stage2,
            out: dir,
            best_of,
            seed,
            scheme,
            limit,
        } => {
            if let Some(s) = best_of {
                config.eval.best_of = s;
            }
            if let Some(s) = seed {
                config.eval.seed = s;
            }
            config.validate()?;
            for p in [&corpus, &stage1, &stage2] {
                require_exists(p)?;
            }
            ensure_dir(&dir)?;
            let report = evaluate_corpus(&config, &corpus, &stage1, &stage2, scheme.into(), limit)?;
            write_file(&dir.join("report.json"), report.to_json())?;
            write_file(&dir.join("report.md"), report.to_markdown())?;
            echo_config(&dir, CONFIG_ECHO, &config)?;
            out.write_all(report.to_markdown().as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn log_line(out: &mut dyn std::io::Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn print_manifest(out: &mut dyn std::io::Write, dir: &Path, m: &Manifest) -> Result<()> {
    log_line(out, &format!("corpus {}", dir.display()))?;
    for (k, v) in &m.counts {
        log_line(out, &format!("  {k}: {v}"))?;
    }
    log_line(out, &format!("manifest sha256 {}", m.content_hash()))
}

/// Training data for `stage` from the training split of `corpus`.
pub fn stage_data(
    config: &RunConfig,
    stage: Stage,
    corpus: &Path,
    scheme: SplitScheme,
) -> Result<(Vec<crate::nn::Tensor>, Vec<crate::nn::Tensor>)> {
    let corpus = load_corpus(corpus)?;
    let skel = corpus.skeleton().clone();
    let train = corpus.split(scheme, Split::Train);
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    match stage {
        Stage::Hands => {
            let basis = config.bps.basis()?;
            let pairs: Vec<_> = train.iter().map(|r| (&r.object, &r.poses)).collect();
            build_stage1_dataset(&pairs, &skel, &basis)
        }
        Stage::FullBody => {
            let poses: Vec<_> = train.iter().map(|r| &r.poses).collect();
            Ok(build_stage2_dataset(&poses, &skel))
        }
    }
}

/// Checkpoint and loss-log file names for a stage.
pub fn stage_files(dir: &Path, stage: Stage) -> (PathBuf, PathBuf) {
    let n = stage.number();
    (dir.join(format!("stage{n}.ckpt")), dir.join(format!("loss_stage{n}.jsonl")))
}

fn train_stage(
    config: &RunConfig,
    stage: Stage,
    corpus: &Path,
    dir: &Path,
    resume: Option<&Path>,
    scheme: SplitScheme,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    let (x, c) = stage_data(config, stage, corpus, scheme)?;
    let skel = load_corpus_skeleton(corpus)?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let mut t = StageTrainer::resume(&ck, &x, &c)?;
            if t.stage != stage {
                return Err(Error::Incompatible(format!("{} holds stage {}", p.display(), t.stage.number())));
            }
            t.settings.steps = config.train.for_stage(stage).steps;
            t
        }
        None => StageTrainer::new(
            stage,
            &config.model,
            config.schedule.clone(),
            config.train.for_stage(stage).clone(),
            &x,
            &c,
            config.bps.basis()?,
            skel,
        )?,
    };
    trainer.config_echo = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    let (ckpt, log_path) = stage_files(dir, stage);
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut io_err = None;
    let n = stage.number();
    trainer.run(|step, loss| {
        let line = serde_json::to_string(&LossRecord { stage: n, step, loss }).expect("loss record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| writeln!(out, "{line}")) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(Error::io(&log_path, e));
    }
    trainer.to_checkpoint().save(&ckpt)?;
    echo_config(dir, &format!("run_config_stage{n}.toml"), config)?;
    log_line(out, &format!("wrote {}", ckpt.display()))
}

fn load_corpus_skeleton(corpus: &Path) -> Result<crate::kinematics::Skeleton> {
    Ok(crate::synthdata::read_manifest(corpus)?.config.skeleton)
}

pub fn evaluate_corpus(
    config: &RunConfig,
    corpus: &Path,
    stage1: &Path,
    stage2: &Path,
    scheme: SplitScheme,
    limit: Option<usize>,
) -> Result<EvalReport> {
    let corpus = load_corpus(corpus)?;
    let s1 = StageModel::load(stage1)?;
    let s2 = StageModel::load(stage2)?;
    if s2.skeleton != *corpus.skeleton() {
        return Err(Error::Incompatible("checkpoint skeleton differs from the corpus skeleton".into()));
    }
    let mut test = corpus.split(scheme, Split::Test);
    if let Some(n) = limit {
        test.truncate(n);
    }
    let train = corpus.split(scheme, Split::Train);
    evaluate(&test, &train, &s1, &s2, &config.eval_settings())
}
