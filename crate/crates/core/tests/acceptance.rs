//! Acceptance criteria 1-8, one pass/fail line each.
//!
//! Lines go straight to the process stdout so they show up without
//! `--nocapture`. Criterion 7 trains both stages on the default corpus and
//! takes tens of minutes on one core.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use motionsynth::cli::RunConfig;
use motionsynth::diffusion::{sample, ScheduleConfig, SequenceDataset, Trainer};
use motionsynth::eval::{
    collision_percentage, contact_scores, evaluate, joint_errors, orientation_error, Variant, COLLISION_THRESHOLD,
};
use motionsynth::geometry::primitives::{box_mesh, cylinder_mesh, icosphere, lamp_mesh};
use motionsynth::geometry::{compute_bps, nearest_vertex_brute_force, BpsBasis, Mesh, ObjectSequence, SdfField, SdfGrid};
use motionsynth::kinematics::{PoseSequence, ProxyConfig, ProxySurface, Skeleton};
use motionsynth::mathcore::{alignment_rms, axis_angle, rot_z, solve_procrustes, Mat3, RigidTransform, Rotation6D, Vec3};
use motionsynth::nn::gradcheck::{check_gradients, check_param_gradients};
use motionsynth::nn::{
    AdamConfig, DenoiserConfig, DenoiserModel, LayerNorm, Linear, Mlp, ParamStore, ProjectorConfig, Tensor, TransformerConfig,
};
use motionsynth::pipeline::{
    build_stage1_dataset, build_stage2_dataset, hand_object_distances, rectify_contacts, HandTrajectory, Stage, StageTrainer,
    RECTIFY_THRESHOLD,
};
use motionsynth::synthdata::{generate_corpus, CorpusConfig, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

const GRAD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const CRITERION1_BUDGET: Duration = Duration::from_secs(60);
const ALPHA_BAR_TOL: f64 = 1e-12;
const MC_DRAWS: usize = 100_000;
const MC_SIGMAS: f64 = 3.0;
const TOY_MAX_STEPS: usize = 2000;
const TOY_TOL: f64 = 0.1;
const CRITERION3_BUDGET: Duration = Duration::from_secs(120);
const ANCHOR_TOL: f64 = 1e-9;
const SDF_SPACINGS: f64 = 2.0;
const PROCRUSTES_TOL: f64 = 1e-9;
const SQRT8_TOL: f64 = 1e-9;
const DESK_BUDGET: Duration = Duration::from_secs(45 * 60);
const HAND_IMPROVEMENT: f64 = 0.30;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = Vec::new();
    let e = |r: motionsynth::Result<f64>| r.map_err(|e| e.to_string());

    let inputs = vec![
        random(&mut rng, 4, 3),
        random(&mut rng, 3, 5),
        random(&mut rng, 4, 5),
        random(&mut rng, 1, 5),
        random(&mut rng, 1, 5),
        random(&mut rng, 2, 5),
    ];
    let target = random(&mut rng, 4, 10);
    worst.push((
        "graph ops",
        e(check_gradients(&inputs, GRAD_H, |g, v| {
            let ab = g.matmul(v[0], v[1])?;
            let s = g.add(ab, v[2])?;
            let s = g.add_bias(s, v[3])?;
            let s = g.gelu(s);
            let s = g.layer_norm(s, v[4], v[3])?;
            let s = g.add_seq_broadcast(s, v[5], 2)?;
            let m = g.mul(s, v[2])?;
            let m = g.scale(m, 0.7);
            let cat = g.concat_cols(m, v[2])?;
            g.l1_loss(cat, &target)
        }))?,
    ));

    let qkv: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 6, 4)).collect();
    let w = random(&mut rng, 6, 4);
    worst.push((
        "attention",
        e(check_gradients(&qkv, GRAD_H, |g, v| {
            let o = g.attention(v[0], v[1], v[2], 2, 3)?;
            let wv = g.constant(w.clone());
            let o = g.mul(o, wv)?;
            Ok(g.sum(o))
        }))?,
    ));

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 3, 4, &mut rng);
    let mlp = Mlp::new(&mut store, "mlp", &[4, 6, 3], &mut rng);
    let ln = LayerNorm::new(&mut store, "ln", 3);
    let x = random(&mut rng, 5, 3);
    worst.push((
        "linear/mlp/layer norm",
        e(check_param_gradients(&store, GRAD_H, |g, s| {
            let xv = g.constant(x.clone());
            let h = lin.forward(g, s, xv)?;
            let h = mlp.forward(g, s, h)?;
            let h = ln.forward(g, s, h)?;
            let h = g.gelu(h);
            Ok(g.sum(h))
        }))?,
    ));

    let config = DenoiserConfig {
        transformer: TransformerConfig {
            x_dim: 3,
            cond_dim: 4,
            d_model: 8,
            attn_dim: 8,
            heads: 2,
            layers: 2,
            ff_dim: 12,
            positional_encoding: true,
        },
        projector: Some(ProjectorConfig {
            raw_dim: 5,
            hidden: 6,
            out_dim: 4,
        }),
    };
    let model = DenoiserModel::new(config, 4).map_err(|e| e.to_string())?;
    let (seq_len, levels) = (3, [2usize, 7]);
    let xn = random(&mut rng, 6, 3);
    let cond = random(&mut rng, 6, 5);
    let x0 = random(&mut rng, 6, 3);
    worst.push((
        "full denoiser (parameters)",
        e(check_param_gradients(&model.params, GRAD_H, |g, s| {
            let xv = g.constant(xn.clone());
            let cv = g.constant(cond.clone());
            let out = model.forward_with(g, s, xv, cv, &levels, seq_len)?;
            g.l1_loss(out, &x0)
        }))?,
    ));
    worst.push((
        "full denoiser (inputs)",
        e(check_gradients(&[xn.clone(), cond.clone()], GRAD_H, |g, v| {
            let out = model.forward(g, v[0], v[1], &levels, seq_len)?;
            g.l1_loss(out, &x0)
        }))?,
    ));

    let elapsed = start.elapsed();
    let (name, max) = worst.iter().fold(("", 0.0f64), |acc, (n, v)| if *v > acc.1 { (n, *v) } else { acc });
    ensure(max < GRAD_TOL, || format!("max relative error {max:.2e} in {name}"))?;
    ensure(elapsed < CRITERION1_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("max relative error {max:.2e} ({name}), {:.1}s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let schedule = ScheduleConfig::desk().build().map_err(|e| e.to_string())?;
    let mut prod = 1.0;
    let mut worst = 0.0f64;
    for n in 1..=schedule.steps() {
        prod *= 1.0 - schedule.beta(n);
        worst = worst.max((prod - schedule.alpha_bar(n)).abs());
    }
    ensure(worst <= ALPHA_BAR_TOL, || format!("alpha-bar product off by {worst:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0_value = 1.3;
    let x0 = Tensor::from_vec(MC_DRAWS, 1, vec![x0_value; MC_DRAWS]).map_err(|e| e.to_string())?;
    let moments = |t: &Tensor| {
        let n = t.len() as f64;
        let m = t.data().iter().sum::<f64>() / n;
        let v = t.data().iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    };
    let mut report = Vec::new();
    for n in [1usize, 10, 25, 50] {
        let closed = schedule.forward_noise(&x0, n, &mut rng).map_err(|e| e.to_string())?;
        let mut chain = x0.clone();
        for k in 1..=n {
            chain = schedule.single_step_noise(&chain, k, &mut rng).map_err(|e| e.to_string())?;
        }
        let (m1, v1) = moments(&closed);
        let (m2, v2) = moments(&chain);
        let nn = MC_DRAWS as f64;
        let se_mean = (v1 / nn + v2 / nn).sqrt();
        let se_var = (2.0 * v1 * v1 / (nn - 1.0) + 2.0 * v2 * v2 / (nn - 1.0)).sqrt();
        ensure((m1 - m2).abs() < MC_SIGMAS * se_mean, || {
            format!("n={n}: closed-form mean {m1:.5} vs chain {m2:.5} (se {se_mean:.2e})")
        })?;
        ensure((v1 - v2).abs() < MC_SIGMAS * se_var, || {
            format!("n={n}: closed-form variance {v1:.5} vs chain {v2:.5} (se {se_var:.2e})")
        })?;
        report.push(format!("n={n} Δmean {:.1}se Δvar {:.1}se", (m1 - m2).abs() / se_mean, (v1 - v2).abs() / se_var));
    }

    let xn = Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.37 - 1.0);
    let x0_hat = Tensor::from_fn(4, 3, |r, c| (r as f64 - c as f64) * 0.21);
    let mu = schedule.posterior_mean(&xn, &x0_hat, 1).map_err(|e| e.to_string())?;
    ensure(mu == x0_hat, || "posterior mean at n=1 differs from x0_hat".into())?;
    Ok(format!("alpha-bar max error {worst:.1e}; {}; posterior_mean(n=1) exact", report.join(", ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let targets = [(-1.0, -0.5), (1.0, 1.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spread = Normal::new(0.0, 0.05).expect("valid sigma");
    let (mut xs, mut cs) = (Vec::new(), Vec::new());
    for i in 0..64 {
        let (c, m) = targets[i % 2];
        xs.push(Tensor::from_vec(1, 1, vec![m + spread.sample(&mut rng)]).expect("shape"));
        cs.push(Tensor::from_vec(1, 1, vec![c]).expect("shape"));
    }
    let data = SequenceDataset::new(xs, cs).map_err(|e| e.to_string())?;
    let config = DenoiserConfig {
        transformer: TransformerConfig {
            x_dim: 1,
            cond_dim: 1,
            d_model: 16,
            attn_dim: 16,
            heads: 2,
            layers: 1,
            ff_dim: 32,
            positional_encoding: false,
        },
        projector: None,
    };
    let schedule = ScheduleConfig::desk().build().map_err(|e| e.to_string())?;
    let model = DenoiserModel::new(config, 0).map_err(|e| e.to_string())?;
    let adam = AdamConfig {
        lr: 3e-3,
        ..AdamConfig::default()
    };
    let mut trainer = Trainer::new(model, schedule.clone(), adam, 32, 1);
    let steps = 800;
    assert!(steps <= TOY_MAX_STEPS);
    for _ in 0..steps {
        trainer.step(&data).map_err(|e| e.to_string())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut parts = Vec::new();
    for (c, m) in targets {
        let cond = Tensor::from_vec(500, 1, vec![c; 500]).expect("shape");
        let x = sample(&trainer.model, &schedule, &cond, 1, 1, &mut rng).map_err(|e| e.to_string())?;
        let mean = x.data().iter().sum::<f64>() / x.len() as f64;
        ensure((mean - m).abs() < TOY_TOL, || format!("condition {c}: mean {mean:.3}, target {m}"))?;
        parts.push(format!("c={c:+} mean {mean:.3} (target {m})"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < CRITERION3_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{steps} steps: {}, {:.1}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let config = CorpusConfig {
        per_family: 25,
        seed: 4,
        ..CorpusConfig::default()
    };
    let records = generate_corpus(&config).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut anchored, mut worst) = (0usize, 0.0f64);
    for rec in &records {
        let noise = Normal::new(0.0, 0.01).expect("valid sigma");
        let drift = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
        let hands = HandTrajectory {
            frames: rec
                .hands
                .frames
                .iter()
                .enumerate()
                .map(|(t, f)| f.map(|h| h + drift * (t as f64 / 10.0) + Vec3::from_fn(|_, _| noise.sample(&mut rng))))
                .collect(),
        };
        let (fixed, anchors) = rectify_contacts(&hands, &rec.object, RECTIFY_THRESHOLD).map_err(|e| e.to_string())?;
        let (again, _) = rectify_contacts(&fixed, &rec.object, RECTIFY_THRESHOLD).map_err(|e| e.to_string())?;
        ensure(again == fixed, || format!("{}: rectification is not idempotent", rec.id))?;
        for h in 0..2 {
            match anchors.iter().find(|a| a.hand.index() == h) {
                Some(a) => {
                    anchored += 1;
                    for t in 0..a.frame {
                        ensure(fixed.frames[t][h] == hands.frames[t][h], || format!("{}: frame {t} before anchor changed", rec.id))?;
                    }
                    for t in a.frame + 1..fixed.len() {
                        let v = rec.object.vertex_at(t, a.vertex).map_err(|e| e.to_string())?;
                        let err = ((fixed.frames[t][h] - v).norm() - a.offset.norm()).abs();
                        worst = worst.max(err);
                        ensure(err <= ANCHOR_TOL, || format!("{}: anchor distance off by {err:e} at frame {t}", rec.id))?;
                    }
                }
                None => {
                    let d = hand_object_distances(&hands, &rec.object).map_err(|e| e.to_string())?;
                    ensure(d.iter().all(|f| f[h].1 >= RECTIFY_THRESHOLD), || format!("{}: contact without anchor", rec.id))?;
                    ensure(fixed.frames.iter().zip(&hands.frames).all(|(a, b)| a[h] == b[h]), || {
                        format!("{}: unanchored hand modified", rec.id)
                    })?;
                }
            }
        }
    }
    ensure(anchored > records.len(), || format!("only {anchored} anchors over {} sequences", records.len()))?;
    Ok(format!(
        "{} sequences, {anchored} anchored hands, max anchor-distance error {worst:.1e}, idempotent, prefixes untouched",
        records.len()
    ))
}

fn random_mesh(rng: &mut ChaCha8Rng, i: usize) -> motionsynth::Result<Mesh> {
    let spacing = rng.random_range(0.03..0.08);
    let mut m = match i % 4 {
        0 => box_mesh(
            "box",
            Vec3::new(rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.1..0.6)),
            spacing,
        )?,
        1 => cylinder_mesh("cyl", rng.random_range(0.05..0.3), rng.random_range(0.1..0.8), 0.0, spacing)?,
        2 => lamp_mesh("lamp", 0.15, 0.02, rng.random_range(0.8..1.4), 0.15, spacing)?,
        _ => icosphere("ball", rng.random_range(0.1..0.5), 2)?,
    };
    let pose = RigidTransform::new(
        axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(), rng.random_range(0.0..3.0)),
        Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
    );
    for v in &mut m.vertices {
        *v = pose.apply(v) + Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
    }
    Ok(m)
}

fn criterion_5() -> Outcome {
    let e = |e: motionsynth::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let basis = BpsBasis::sample(64, 1.0, 5).map_err(e)?;
    let mut compared = 0usize;
    for i in 0..50 {
        let mesh = random_mesh(&mut rng, i).map_err(e)?;
        let f = compute_bps(&basis, &mesh.vertices).map_err(e)?;
        for (b, d) in basis.points.iter().zip(&f.deltas) {
            let q = f.centroid + b;
            let (j, _) = nearest_vertex_brute_force(&mesh.vertices, &q).map_err(e)?;
            ensure(mesh.vertices[j] - q == *d, || format!("mesh {i}: BPS delta differs from brute force"))?;
            compared += 1;
        }
    }

    let radius = 0.3;
    let ball = icosphere("ball", radius, 4).map_err(e)?;
    let grid = SdfGrid::bake(&ball, 32, 0.1).map_err(e)?;
    let oracle = SdfField::Sphere {
        center: Vec3::zeros(),
        radius,
    };
    let mut worst_sdf = 0.0f64;
    for _ in 0..1000 {
        let p = Vec3::from_fn(|_, _| rng.random_range(-0.38..0.38));
        worst_sdf = worst_sdf.max((grid.query(&p) - oracle.query(&p)).abs());
    }
    ensure(worst_sdf <= SDF_SPACINGS * grid.spacing, || {
        format!("grid SDF error {worst_sdf:.4} exceeds {SDF_SPACINGS} x spacing {:.4}", grid.spacing)
    })?;

    let mut worst_fit = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(4..40);
        let src: Vec<Vec3> = (0..n).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let truth = RigidTransform {
            rotation: axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(), rng.random_range(0.0..3.1)),
            translation: Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0)),
            scale: rng.random_range(0.5..2.0),
        };
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = solve_procrustes(&src, &dst).map_err(e)?;
        worst_fit = worst_fit.max(alignment_rms(&fit, &src, &dst));
    }
    ensure(worst_fit < PROCRUSTES_TOL, || format!("Procrustes residual {worst_fit:e}"))?;
    Ok(format!(
        "{compared} BPS deltas exact on 50 meshes; SDF max error {worst_sdf:.4} m ({:.2} spacings); Procrustes residual {worst_fit:.1e}",
        worst_sdf / grid.spacing
    ))
}

fn criterion_6() -> Outcome {
    let e = |e: motionsynth::Error| e.to_string();
    let skel = Skeleton::stick9();
    let proxy = ProxySurface::new(&skel, ProxyConfig::default());
    let frames = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let roots: Vec<Vec3> = (0..frames).map(|t| Vec3::new(0.02 * t as f64, 0.0, 0.9)).collect();
    let rots: Vec<Vec<Rotation6D>> = (0..frames)
        .map(|_| {
            skel.rotated()
                .iter()
                .map(|_| {
                    let r = axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(), rng.random_range(0.0..1.0));
                    Rotation6D::from_matrix(&r)
                })
                .collect::<motionsynth::Result<_>>()
        })
        .collect::<motionsynth::Result<_>>()
        .map_err(e)?;
    let gt = PoseSequence::new(&skel, roots, rots).map_err(e)?;
    let self_err = joint_errors(&gt, &gt, &skel, &proxy).map_err(e)?;
    ensure(self_err.mpjpe == 0.0 && self_err.hand_jpe == 0.0 && self_err.mpvpe == 0.0, || {
        format!("GT vs GT errors {self_err:?}")
    })?;

    // Two hand-frames each: one true positive, one false positive, one
    // false negative, one true negative.
    let pred = [[true, false], [true, false], [false, false], [false, false]];
    let truth = [[true, false], [false, false], [true, false], [false, false]];
    let s = contact_scores(&pred, &truth).map_err(e)?;
    ensure(s.precision == 0.5 && s.recall == 0.5 && s.f1 == 0.5, || format!("contact scores {s:?}"))?;

    let o = orientation_error(&rot_z(std::f64::consts::PI), &Mat3::identity());
    ensure((o - 8f64.sqrt()).abs() <= SQRT8_TOL, || format!("o_root {o}"))?;

    let one_point = ProxySurface {
        points: vec![(0, Vec3::zeros())],
    };
    let tri = Mesh::new("tri", vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).map_err(e)?;
    let object = ObjectSequence::new(tri, vec![RigidTransform::identity(); 1], 30.0).map_err(e)?;
    let sphere = SdfField::Sphere {
        center: Vec3::zeros(),
        radius: 1.0,
    };
    let at_depth = |depth: f64| -> motionsynth::Result<f64> {
        let p = PoseSequence::new(&skel, vec![Vec3::new(1.0 - depth, 0.0, 0.0)], vec![vec![Rotation6D::IDENTITY; skel.num_rotated()]])?;
        collision_percentage(&p, &skel, &one_point, &object, &sphere, COLLISION_THRESHOLD)
    };
    let shallow = at_depth(0.03).map_err(e)?;
    let deep = at_depth(0.05).map_err(e)?;
    ensure(shallow == 0.0 && deep == 100.0, || format!("collision rule: -0.03 -> {shallow}%, -0.05 -> {deep}%"))?;
    Ok(format!(
        "MPJPE(GT,GT)=0; P=R=F1=0.5; o_root(Rz(180°))={o:.12}; SDF -0.03 -> {shallow}%, -0.05 -> {deep}%"
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let e = |e: motionsynth::Error| e.to_string();
    let config = RunConfig::desk();
    let records = generate_corpus(&config.corpus).map_err(e)?;
    let train: Vec<_> = records.iter().filter(|r| r.split == Split::Train).collect();
    let test: Vec<_> = records.iter().filter(|r| r.split == Split::Test).collect();
    ensure(train.len() == 200 && test.len() == 40, || format!("{} train / {} test", train.len(), test.len()))?;
    let skel = config.corpus.skeleton.clone();
    ensure(skel.num_joints() == 9, || "expected the 9-joint skeleton".into())?;
    let basis = config.bps.basis().map_err(e)?;

    let pairs: Vec<_> = train.iter().map(|r| (&r.object, &r.poses)).collect();
    let (x1, c1) = build_stage1_dataset(&pairs, &skel, &basis).map_err(e)?;
    let poses: Vec<_> = train.iter().map(|r| &r.poses).collect();
    let (x2, c2) = build_stage2_dataset(&poses, &skel);
    let mut models = Vec::new();
    let mut losses = Vec::new();
    for (stage, x, c) in [(Stage::Hands, &x1, &c1), (Stage::FullBody, &x2, &c2)] {
        let settings = config.train.for_stage(stage).clone();
        let mut trainer =
            StageTrainer::new(stage, &config.model, config.schedule.clone(), settings, x, c, basis.clone(), skel.clone()).map_err(e)?;
        let mut log = Vec::new();
        trainer.run(|_, l| log.push(l)).map_err(e)?;
        losses.push((log[0], *log.last().expect("at least one log line")));
        models.push(trainer.model());
    }
    let train_time = start.elapsed();
    let report = evaluate(&test, &train, &models[0], &models[1], &config.eval_settings()).map_err(e)?;
    let elapsed = start.elapsed();

    let s1 = &report.stage1;
    let rect = report.variant(Variant::Rectified).mean;
    let unrect = report.variant(Variant::Unrectified).mean;
    let gt = report.variant(Variant::GtHands).mean;
    let detail = format!(
        "train {:.0}s + eval {:.0}s; losses s1 {:.3}->{:.3}, s2 {:.3}->{:.3}; \
         7a best-of-{} Hand JPE {:.2} cm vs mean baseline {:.2} cm ({:.1}% better; world-mean baseline {:.2} cm); \
         7b recall {:.3} vs {:.3}, F1 {:.3} vs {:.3}; 7c MPJPE gt-hands {:.2} vs rectified {:.2} cm",
        train_time.as_secs_f64(),
        (elapsed - train_time).as_secs_f64(),
        losses[0].0,
        losses[0].1,
        losses[1].0,
        losses[1].1,
        s1.best_of,
        s1.best_hand_jpe,
        s1.baseline_hand_jpe,
        100.0 * s1.improvement,
        s1.world_baseline_hand_jpe,
        rect.c_rec,
        unrect.c_rec,
        rect.f1,
        unrect.f1,
        gt.mpjpe,
        rect.mpjpe,
    );
    let mut failed = Vec::new();
    if elapsed > DESK_BUDGET {
        failed.push("time");
    }
    if s1.improvement < HAND_IMPROVEMENT {
        failed.push("7a");
    }
    if !(rect.c_rec > unrect.c_rec && rect.f1 > unrect.f1) {
        failed.push("7b");
    }
    if gt.mpjpe > rect.mpjpe {
        failed.push("7c");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("failed {}: {detail}", failed.join(", ")))
    }
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_motionsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[corpus]\nper_family = 6\n[train.stage1]\nsteps = 20\nlog_every = 5\nbatch_size = 8\n\
         [train.stage2]\nsteps = 20\nlog_every = 5\nbatch_size = 8\n",
    )
    .map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().expect("utf-8 path");
    let mut runs = Vec::new();
    for r in 0..2 {
        let root = tmp.path().join(format!("run{r}"));
        std::fs::create_dir(&root).map_err(|e| e.to_string())?;
        let p = |name: &str| root.join(name).to_str().expect("utf-8 path").to_string();
        run_cli(&["--config", cfg, "gen-data", "--out", &p("corpus")])?;
        for stage in ["1", "2"] {
            run_cli(&["--config", cfg, "train", "--stage", stage, "--corpus", &p("corpus"), "--out", &p("ckpt")])?;
        }
        let rec = root.join("corpus").join("seq_0005");
        run_cli(&[
            "--config",
            cfg,
            "pipeline",
            "--object-trajectory",
            rec.join("trajectory.jsonl").to_str().expect("utf-8 path"),
            "--mesh",
            rec.join("mesh.obj").to_str().expect("utf-8 path"),
            "--stage1",
            &p("ckpt/stage1.ckpt"),
            "--stage2",
            &p("ckpt/stage2.ckpt"),
            "--seed",
            "3",
            "--out",
            &p("motion.jsonl"),
        ])?;
        runs.push(root);
    }
    let mut checked = Vec::new();
    for f in [
        "corpus/manifest.json",
        "ckpt/loss_stage1.jsonl",
        "ckpt/loss_stage2.jsonl",
        "ckpt/stage1.ckpt",
        "ckpt/stage2.ckpt",
        "motion.jsonl",
    ] {
        let a = read(&runs[0].join(f))?;
        let b = read(&runs[1].join(f))?;
        ensure(!a.is_empty() && a == b, || format!("{f} differs between runs"))?;
        checked.push(f);
    }
    Ok(format!("bit-identical across two runs: {}", checked.join(", ")))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient correctness", criterion_1),
        ("diffusion identities", criterion_2),
        ("toy conditional recovery", criterion_3),
        ("rectification guarantees", criterion_4),
        ("geometry oracles", criterion_5),
        ("metric suite", criterion_6),
        ("end-to-end desk training", criterion_7),
        ("reproducibility", criterion_8),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = Vec::new();
    let mut stdout = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let line = match f() {
            Ok(detail) => format!("criterion {n} PASS {name}: {detail}\n"),
            Err(detail) => {
                failures.push(n);
                format!("criterion {n} FAIL {name}: {detail}\n")
            }
        };
        let _ = stdout.write_all(line.as_bytes());
        let _ = stdout.flush();
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
