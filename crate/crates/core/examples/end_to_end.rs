//! Corpus → stage-1 and stage-2 training → pipeline on a held-out
//! sequence → small evaluation. Short runs; pass a step count to train
//! longer (`cargo run --release --example end_to_end -- 2000`).

use motionsynth::diffusion::ScheduleConfig;
use motionsynth::eval::{evaluate, EvalSettings, Variant};
use motionsynth::geometry::BpsBasis;
use motionsynth::pipeline::{
    build_stage1_dataset, build_stage2_dataset, run_pipeline, write_motion, ModelDims, MotionFile, PipelineOptions, Stage, StageTrainer,
    TrainSettings,
};
use motionsynth::synthdata::{generate_corpus, CorpusConfig, Split};

fn main() -> motionsynth::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let config = CorpusConfig {
        per_family: 24,
        ..CorpusConfig::default()
    };
    let records = generate_corpus(&config)?;
    let train: Vec<_> = records.iter().filter(|r| r.split == Split::Train).collect();
    let test: Vec<_> = records.iter().filter(|r| r.split == Split::Test).collect();
    println!("{} train / {} test sequences", train.len(), test.len());

    let skel = config.skeleton.clone();
    let basis = BpsBasis::sample(64, 1.0, 0)?;
    let pairs: Vec<_> = train.iter().map(|r| (&r.object, &r.poses)).collect();
    let (x1, c1) = build_stage1_dataset(&pairs, &skel, &basis)?;
    let poses: Vec<_> = train.iter().map(|r| &r.poses).collect();
    let (x2, c2) = build_stage2_dataset(&poses, &skel);

    let mut models = Vec::new();
    for (stage, x, c) in [(Stage::Hands, &x1, &c1), (Stage::FullBody, &x2, &c2)] {
        let settings = TrainSettings {
            steps,
            log_every: (steps / 4).max(1),
            seed: stage.number() as u64,
            ..TrainSettings::default()
        };
        let mut trainer = StageTrainer::new(stage, &ModelDims::desk(), ScheduleConfig::desk(), settings, x, c, basis.clone(), skel.clone())?;
        trainer.run(|step, loss| println!("stage {} step {step:>5} loss {loss:.4}", stage.number()))?;
        models.push(trainer.model());
    }
    let (stage1, stage2) = (&models[0], &models[1]);

    let rec = test[0];
    for rectify in [true, false] {
        let out = run_pipeline(&rec.object, stage1, stage2, PipelineOptions { seed: 7, rectify, ..PipelineOptions::default() })?;
        println!("{} rectify={rectify}: {} frames, anchors {:?}", rec.id, out.poses.len(), out.anchors.iter().map(|a| (a.hand, a.frame)).collect::<Vec<_>>());
        if rectify {
            let path = std::env::temp_dir().join(format!("{}_motion.jsonl", rec.id));
            let motion = MotionFile {
                fps: rec.object.fps,
                skeleton: skel.clone(),
                poses: out.poses,
                anchors: out.anchors,
                rectified: Some(true),
            };
            write_motion(&path, &motion)?;
            println!("wrote {}", path.display());
        }
    }

    let settings = EvalSettings {
        best_of: 4,
        sdf_resolution: 16,
        ..EvalSettings::default()
    };
    let report = evaluate(&test[..4], &train, stage1, stage2, &settings)?;
    print!("{}", report.to_markdown().split("\n\n###").next().unwrap_or_default());
    println!();
    let r = report.variant(Variant::Rectified).mean;
    println!("rectified contact F1 {:.3}", r.f1);
    Ok(())
}
