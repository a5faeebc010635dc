use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use motionsynth::geometry::obj::write_obj;
use motionsynth::geometry::primitives::icosphere;
use motionsynth::geometry::trajectory::{write_trajectory, Trajectory};
use motionsynth::mathcore::{rot_z, RigidTransform, Vec3};
use motionsynth::pipeline::{read_motion, run_pipeline, PipelineOptions, StageModel};
use motionsynth::synthdata::Manifest;

const SMALL: &str = "[corpus]\nper_family = 6\n\
    [train.stage1]\nsteps = 20\nlog_every = 5\nbatch_size = 8\n\
    [train.stage2]\nsteps = 20\nlog_every = 5\nbatch_size = 8\n";

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motionsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} exited with {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Small corpus plus both trained stages, shared by the tests below.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("small.toml");
        std::fs::write(&config, SMALL).unwrap();
        let c = s(&config);
        ok(&["--config", c, "gen-data", "--out", s(&root.join("corpus"))]);
        for stage in ["1", "2"] {
            ok(&["--config", c, "train", "--stage", stage, "--corpus", s(&root.join("corpus")), "--out", s(&root.join("ckpt"))]);
        }
        Fixture { _dir: dir, root, config }
    })
}

#[test]
fn gen_data_default_corpus_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = ok(&["gen-data", "--out", s(&a)]);
    ok(&["gen-data", "--out", s(&b)]);
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.sequences.len(), 240);
    assert!(out.contains(&manifest.content_hash()));
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
    assert!(a.join("run_config.toml").exists());
}

#[test]
fn gen_data_missing_parent_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["gen-data", "--out", s(&dir.path().join("no/such/corpus"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train.stage1]\nsteps = \"many\"\n").unwrap();
    let out = cli(&["--config", s(&cfg), "gen-data", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_one_loss_line_per_interval() {
    let f = fixture();
    for stage in [1, 2] {
        let log = std::fs::read_to_string(f.path(&format!("ckpt/loss_stage{stage}.jsonl"))).unwrap();
        let steps: Vec<u64> = log
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["step"].as_u64().unwrap())
            .collect();
        assert_eq!(steps, vec![5, 10, 15, 20]);
    }
    assert!(f.path("ckpt/run_config_stage1.toml").exists());
}

#[test]
fn resume_matches_uninterrupted_training() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let part = dir.path().join("part");
    let (c, corpus) = (s(&f.config), f.path("corpus"));
    ok(&["--config", c, "train", "--stage", "1", "--corpus", s(&corpus), "--out", s(&part), "--steps", "10"]);
    ok(&[
        "--config",
        c,
        "train",
        "--stage",
        "1",
        "--corpus",
        s(&corpus),
        "--out",
        s(&part),
        "--resume",
        s(&part.join("stage1.ckpt")),
    ]);
    for file in ["stage1.ckpt", "loss_stage1.jsonl"] {
        assert_eq!(
            std::fs::read(part.join(file)).unwrap(),
            std::fs::read(f.path("ckpt").join(file)).unwrap(),
            "{file}"
        );
    }
}

fn pipeline_args(f: &Fixture, traj: &Path, mesh: &Path, out: &Path) -> Vec<String> {
    let ck = |n: &str| f.path("ckpt").join(n);
    [
        "--config".as_ref(),
        f.config.as_path(),
        "pipeline".as_ref(),
        "--object-trajectory".as_ref(),
        traj,
        "--mesh".as_ref(),
        mesh,
        "--stage1".as_ref(),
        &ck("stage1.ckpt"),
        "--stage2".as_ref(),
        &ck("stage2.ckpt"),
        "--out".as_ref(),
        out,
    ]
    .iter()
    .map(|p: &&Path| s(p).to_string())
    .collect()
}

fn ok_owned(args: &[String]) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn pipeline_writes_one_pose_per_object_frame() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let rec = f.path("corpus/seq_0005");
    let (traj, mesh) = (rec.join("trajectory.jsonl"), rec.join("mesh.obj"));
    let with = dir.path().join("with.jsonl");
    let without = dir.path().join("without.jsonl");
    ok_owned(&pipeline_args(f, &traj, &mesh, &with));
    let mut args = pipeline_args(f, &traj, &mesh, &without);
    args.push("--no-rectify".into());
    ok_owned(&args);
    let a = read_motion(&with).unwrap();
    let b = read_motion(&without).unwrap();
    assert_eq!(a.poses.len(), 30);
    assert_eq!(b.poses.len(), 30);
    assert_eq!(a.rectified, Some(true));
    assert_eq!(b.rectified, Some(false));
    assert!(b.anchors.is_empty());
    assert!(dir.path().join("with.config.toml").exists());
}

#[test]
fn rectification_only_changes_frames_from_the_anchor_on() {
    let f = fixture();
    let s1 = StageModel::load(f.path("ckpt/stage1.ckpt")).unwrap();
    let s2 = StageModel::load(f.path("ckpt/stage2.ckpt")).unwrap();
    let rec = f.path("corpus/seq_0005");
    let traj = motionsynth::geometry::trajectory::read_trajectory(&rec.join("trajectory.jsonl")).unwrap();
    let mesh = motionsynth::geometry::obj::read_obj(&rec.join("mesh.obj")).unwrap();
    let seq = motionsynth::geometry::ObjectSequence::new(mesh, traj.transforms, traj.fps).unwrap();
    for seed in 0..4 {
        let opts = PipelineOptions { seed, ..PipelineOptions::default() };
        let r = run_pipeline(&seq, &s1, &s2, opts).unwrap();
        let u = run_pipeline(&seq, &s1, &s2, PipelineOptions { rectify: false, ..opts }).unwrap();
        assert_eq!(r.predicted_hands, u.predicted_hands);
        assert_eq!(u.hands, u.predicted_hands);
        for h in 0..2 {
            let first = r.anchors.iter().find(|a| a.hand.index() == h).map_or(seq.len(), |a| a.frame);
            for t in 0..=first.min(seq.len() - 1) {
                assert_eq!(r.hands.frames[t][h], u.hands.frames[t][h], "seed {seed} hand {h} frame {t}");
            }
        }
    }
}

#[test]
fn pipeline_accepts_an_unseen_shape() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mesh_path = dir.path().join("ball.obj");
    write_obj(&mesh_path, &icosphere("ball", 0.15, 2).unwrap()).unwrap();
    let transforms = (0..30)
        .map(|t| {
            let u = t as f64 / 29.0;
            RigidTransform::new(rot_z(0.5 * u), Vec3::new(0.6 + 0.3 * u, 0.1, 0.8 + 0.2 * u))
        })
        .collect();
    let traj_path = dir.path().join("ball.jsonl");
    write_trajectory(&traj_path, &Trajectory { fps: 30.0, transforms }).unwrap();
    let out = dir.path().join("ball_motion.jsonl");
    ok_owned(&pipeline_args(f, &traj_path, &mesh_path, &out));
    let motion = read_motion(&out).unwrap();
    assert_eq!(motion.poses.len(), 30);
    assert!(motion.poses.flatten().all_finite());
}

#[test]
fn mismatched_checkpoints_exit_5() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("other.toml");
    std::fs::write(&cfg, format!("{SMALL}[bps]\nseed = 99\n")).unwrap();
    let other = dir.path().join("ckpt");
    ok(&["--config", s(&cfg), "train", "--stage", "1", "--corpus", s(&f.path("corpus")), "--out", s(&other), "--steps", "2"]);
    let rec = f.path("corpus/seq_0005");
    let out = cli(&[
        "pipeline",
        "--object-trajectory",
        s(&rec.join("trajectory.jsonl")),
        "--mesh",
        s(&rec.join("mesh.obj")),
        "--stage1",
        s(&other.join("stage1.ckpt")),
        "--stage2",
        s(&f.path("ckpt/stage2.ckpt")),
        "--out",
        s(&dir.path().join("m.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_reports_ten_metric_columns_per_variant() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    ok(&[
        "--config",
        s(&f.config),
        "evaluate",
        "--corpus",
        s(&f.path("corpus")),
        "--stage1",
        s(&f.path("ckpt/stage1.ckpt")),
        "--stage2",
        s(&f.path("ckpt/stage2.ckpt")),
        "--out",
        s(&out),
        "--best-of",
        "2",
        "--limit",
        "2",
    ]);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| ")).collect();
    let header = rows[0];
    assert_eq!(header.matches('|').count(), 12, "{header}");
    for variant in ["rectified", "unrectified", "gt-hands"] {
        let row = rows.iter().find(|r| r.starts_with(&format!("| {variant} |"))).unwrap();
        assert_eq!(row.matches('|').count(), 12);
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["num_sequences"], 2);
    assert!(out.join("run_config.toml").exists());
}
