//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and a summary.
//!
//! `ACCEPTANCE_ONLY=1,3` restricts the run to the listed criteria.
//! `ACCEPTANCE_STRICT=1` makes any failure a non-zero exit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reachgen::body::{forward_kinematics, integrate_delta, matrix_to_sixd, pose_delta, Pose, Skeleton};
use reachgen::cvae::train::normalizer_from_windows;
use reachgen::cvae::{batch_loss, encode_checkpoint, epoch_windows, log_csv, Model, ModelSpec, Preset, TrainConfig, Trainer};
use reachgen::dataset::{generate_synthetic_corpus, MotionSequence, SyntheticGenConfig};
use reachgen::evaluation::{aggregates_csv, rollouts_csv, run_benchmark, standing_starts, EvalConfig, EvalReport, GridAxes};
use reachgen::intention::{pelvis_intention, wrist_intention, GoalSpec};
use reachgen::latent_opt::{latent_objective, optimize_latents, OptObjective, OptSettings, Waypoint};
use reachgen::nn::{kl_divergence, GaussianParams, KlDirection};
use reachgen::rollout::{generate, GoalSchedule, SampleMode};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit: Duration, t: Instant) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_pelvis = 0.0f64;
    for _ in 0..1000 {
        let d: f64 = rng.random_range(0.0..12.0);
        let theta: f64 = rng.random_range(-3.2..3.2);
        let p = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.5..1.2));
        let g = p + Vector3::new(d * theta.cos(), d * theta.sin(), rng.random_range(-1.0..1.0));
        let v = pelvis_intention(&p, &g);
        let dxy = (g - p).xy().norm();
        worst_pelvis = worst_pelvis.max((v.norm() - 2.0 * (1.0 - (-dxy).exp())).abs());
    }
    let mut wrist_exact = true;
    for _ in 0..1000 {
        let w = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0));
        let g = GoalSpec::new(
            Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0)),
            rng.random_range(0..300),
        );
        let i = rng.random_range(0..320usize);
        let expect = (g.position - w) / (g.target_frame as f64 - i as f64).max(1.0);
        wrist_exact &= wrist_intention(&w, &g, i) == expect;
    }
    let mut worst_kl = 0.0f64;
    for _ in 0..20 {
        let dim = rng.random_range(1..4usize);
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let log_std: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.6..0.4)).collect();
        let q = GaussianParams::new(mean.clone(), log_std.clone()).unwrap();
        for dir in [KlDirection::Standard, KlDirection::AsWritten] {
            let exact = kl_divergence(&q, dir);
            // log N(x; m, s) without the shared constant
            let logq = |x: &[f64]| -> f64 {
                x.iter()
                    .zip(&mean)
                    .zip(&log_std)
                    .map(|((x, m), ls)| -0.5 * ((x - m) / ls.exp()).powi(2) - ls)
                    .sum()
            };
            let logp = |x: &[f64]| -> f64 { x.iter().map(|x| -0.5 * x * x).sum() };
            let n = 1_000_000;
            let mut acc = 0.0;
            let mut x = vec![0.0; dim];
            for _ in 0..n {
                for k in 0..dim {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x[k] = match dir {
                        KlDirection::Standard => mean[k] + log_std[k].exp() * e,
                        KlDirection::AsWritten => e,
                    };
                }
                acc += match dir {
                    KlDirection::Standard => logq(&x) - logp(&x),
                    KlDirection::AsWritten => logp(&x) - logq(&x),
                };
            }
            worst_kl = worst_kl.max(((acc / n as f64) - exact).abs() / exact);
        }
    }
    let (fast, time) = within(Duration::from_secs(10), t);
    outcome(
        worst_pelvis < 1e-12 && wrist_exact && worst_kl < 0.01 && fast,
        format!("pelvis err {worst_pelvis:.1e}, wrist exact {wrist_exact}, KL rel err {:.3}%, {time}", 100.0 * worst_kl),
    )
}

// ---------------------------------------------------------------- 2

fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0) + 1e-3,
    ));
    Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1)).into_inner()
}

fn random_pose(rng: &mut ChaCha8Rng, joints: usize) -> Pose {
    Pose {
        translation: Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.3..1.2)),
        root_orientation: matrix_to_sixd(&random_rotation(rng)).unwrap(),
        joint_rotations: (0..joints).map(|_| matrix_to_sixd(&random_rotation(rng)).unwrap()).collect(),
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let joints = Skeleton::desk().joint_count();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut roundtrip, mut invariance) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b) = (random_pose(&mut rng, joints), random_pose(&mut rng, joints));
        let d = pose_delta(&a, &b).unwrap();
        let back = integrate_delta(&a, &d).unwrap();
        let err = back.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        roundtrip = roundtrip.max(err);
        let yaw = rng.random_range(-3.14..3.14);
        let shift = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0);
        let d2 = pose_delta(&a.rotated_z(yaw).translated(shift), &b.rotated_z(yaw).translated(shift)).unwrap();
        let err = d.to_vec().iter().zip(d2.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        invariance = invariance.max(err);
    }
    let (fast, time) = within(Duration::from_secs(10), t);
    outcome(
        roundtrip < 1e-9 && invariance < 1e-6 && fast,
        format!("roundtrip err {roundtrip:.1e}, yaw invariance err {invariance:.1e}, {time}"),
    )
}

// ---------------------------------------------------------------- 3

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let skel = Skeleton::desk();
    let corpus = generate_synthetic_corpus(
        &SyntheticGenConfig {
            locomotion: 2,
            reaching: 1,
            seed: SEED,
            ..SyntheticGenConfig::default()
        },
        &skel,
    )
    .unwrap();
    let cfg = TrainConfig {
        alpha: 0.3,
        window_len: 4,
        seed: SEED,
        ..TrainConfig::default()
    };
    let windows: Vec<_> = epoch_windows(&corpus, &skel, &cfg, 0).unwrap().into_iter().take(2).collect();
    let mut model = Model::new(ModelSpec::new(skel.joint_count(), 3, 2, 8, 0.0), &skel, SEED).unwrap();
    model.normalizer = normalizer_from_windows(&windows, &skel).unwrap();
    let s = 2;
    let (_, grads) = batch_loss(&model, &windows, s, &cfg, 5).unwrap();
    let ids: Vec<_> = model.store.ids().collect();
    let (mut worst, mut checked) = (0.0f64, 0usize);
    let h = 1e-6;
    for id in ids {
        let g = grads.param(id);
        for k in 0..g.len() {
            let orig = model.store.get(id).data()[k];
            model.store.get_mut(id).data_mut()[k] = orig + h;
            let up = batch_loss(&model, &windows, s, &cfg, 5).unwrap().0.total;
            model.store.get_mut(id).data_mut()[k] = orig - h;
            let down = batch_loss(&model, &windows, s, &cfg, 5).unwrap().0.total;
            model.store.get_mut(id).data_mut()[k] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * h), g.data()[k]));
            checked += 1;
        }
    }

    // L_opt over a 5-frame rollout, every latent entry
    let goal = GoalSpec::new(Vector3::new(0.9, 0.4, 1.0), 5);
    let rec = generate(&Pose::rest(&skel, 0.9), &GoalSchedule::single(goal.clone()), 5, &model, 3, SampleMode::sample()).unwrap();
    let obj = OptObjective {
        w_goal: 1.0,
        w_prior: 0.1,
        waypoints: vec![Waypoint {
            frame: 3,
            position: Vector2::new(0.3, -0.2),
            weight: 1.0,
        }],
    };
    let eval = latent_objective(&rec, &rec.latents, &goal, &obj, &model).unwrap();
    let mut worst_opt = 0.0f64;
    let value = |zs: &[Vec<f64>]| latent_objective(&rec, zs, &goal, &obj, &model).unwrap().terms.total;
    for i in 0..rec.latents.len() {
        for k in 0..model.spec.latent {
            let (mut a, mut b) = (rec.latents.clone(), rec.latents.clone());
            a[i][k] += h;
            b[i][k] -= h;
            worst_opt = worst_opt.max(rel_err((value(&a) - value(&b)) / (2.0 * h), eval.gradient[i][k]));
            checked += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(120), t);
    outcome(
        worst < 1e-4 && worst_opt < 1e-4 && fast,
        format!("{checked} entries, loss rel err {worst:.1e}, L_opt rel err {worst_opt:.1e}, {time}"),
    )
}

// ---------------------------------------------------------------- 4, 5, 7 share one trained model

struct Trained {
    corpus: Vec<MotionSequence>,
    trainer: Trainer,
    twenty: Duration,
}

fn corpus(skel: &Skeleton) -> Vec<MotionSequence> {
    generate_synthetic_corpus(
        &SyntheticGenConfig {
            seed: SEED,
            ..SyntheticGenConfig::default()
        },
        skel,
    )
    .unwrap()
}

fn train_desk() -> Trained {
    let skel = Skeleton::desk();
    let corpus = corpus(&skel);
    let preset = Preset::Desk;
    let model = Model::new(preset.model_spec(skel.joint_count()), &skel, SEED).unwrap();
    let t = Instant::now();
    let mut trainer = Trainer::new(model, &corpus, preset.train_config(SEED)).unwrap();
    let mut twenty = Duration::ZERO;
    while trainer.epoch < trainer.config.epochs {
        let row = trainer.step_epoch(&corpus, 1).unwrap();
        eprintln!("  epoch {:>3} s {:>2} loss {:.4}", row.epoch, row.s, row.loss.total);
        if trainer.epoch == 20 {
            twenty = t.elapsed();
        }
    }
    Trained { corpus, trainer, twenty }
}

fn criterion_4(tr: &Trained) -> Outcome {
    let log = &tr.trainer.log;
    let first = log[0].loss.total;
    let twentieth = log[19].loss.total;
    let cfg = &tr.trainer.config;
    let schedule_ok = log.iter().all(|r| r.s == (10.0 * (r.epoch as f64 / 50.0).min(1.0)).round() as usize)
        && cfg.s_max == 10
        && cfg.ramp_epochs == 50;
    let spec = &tr.trainer.model.spec;
    let desk = spec.latent == 16 && spec.decoder.layers == 4 && cfg.batch == 32 && tr.corpus.len() >= 300;
    let fast = tr.twenty <= Duration::from_secs(600);
    outcome(
        twentieth < 0.5 * first && schedule_ok && desk && fast,
        format!(
            "epoch-1 {first:.4} -> epoch-20 {twentieth:.4} ({:.0}%), s schedule {}, {} seqs, 20 epochs in {:.0}s of 600s",
            100.0 * twentieth / first,
            if schedule_ok { "exact" } else { "WRONG" },
            tr.corpus.len(),
            tr.twenty.as_secs_f64()
        ),
    )
}

fn reduced_cfg() -> EvalConfig {
    EvalConfig {
        samples: 3,
        axes: GridAxes::reduced(),
        ..EvalConfig::default()
    }
}

fn criterion_5(tr: &Trained) -> Outcome {
    let t = Instant::now();
    let trained = &tr.trainer.model;
    let skel = &trained.skeleton;
    let poses = standing_starts(skel, 2, SEED).unwrap();
    let mut untrained = Model::new(trained.spec.clone(), skel, SEED).unwrap();
    untrained.normalizer = trained.normalizer.clone();
    let cfg = reduced_cfg();
    let a: EvalReport = run_benchmark(trained, &cfg, &poses, SEED, 1).unwrap();
    let b: EvalReport = run_benchmark(&untrained, &cfg, &poses, SEED, 1).unwrap();
    let (fast, time) = within(Duration::from_secs(300), t);
    outcome(
        a.dtg_cm <= 0.5 * b.dtg_cm && a.sr > b.sr && fast,
        format!(
            "trained DTG {:.1} cm SR {:.3} vs untrained DTG {:.1} cm SR {:.3} (ratio {:.2}), {} rollouts each, {time}",
            a.dtg_cm,
            a.sr,
            b.dtg_cm,
            b.sr,
            a.dtg_cm / b.dtg_cm,
            a.rows.len()
        ),
    )
}

fn criterion_7(tr: &Trained) -> Outcome {
    let t = Instant::now();
    let model = &tr.trainer.model;
    let skel = &model.skeleton;
    let starts = standing_starts(skel, 10, SEED + 7).unwrap();
    let frames = 60;
    let (mut goal_wins, mut way_wins) = (0, 0);
    let mut ratios = Vec::new();
    let mut seed = 0u64;
    let mut used = 0;
    while used < 10 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ seed);
        let start = &starts[used];
        let theta: f64 = rng.random_range(-3.1..3.1);
        let d: f64 = rng.random_range(0.6..1.5);
        let goal = GoalSpec::new(
            start.translation + Vector3::new(d * theta.cos(), d * theta.sin(), rng.random_range(0.6..1.3) - start.translation.z),
            frames,
        );
        let rec = generate(start, &GoalSchedule::single(goal.clone()), frames, model, seed, SampleMode::sample()).unwrap();
        let last = forward_kinematics(rec.sequence.poses.last().unwrap(), skel).unwrap();
        if (last.get(skel.right_wrist()) - goal.position).norm() <= 0.1 {
            continue;
        }
        used += 1;
        let (_, report) = optimize_latents(&rec, &goal, &OptObjective::default(), OptSettings::default(), model).unwrap();
        let r = report.final_distance / report.initial_distance;
        goal_wins += usize::from(r <= 0.7);

        let k = frames / 2;
        let mid = forward_kinematics(&rec.sequence.poses[k], skel).unwrap().get(skel.pelvis()).xy();
        let target = mid + Vector2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
        let obj = OptObjective {
            w_goal: 0.0,
            w_prior: 1e-3,
            waypoints: vec![Waypoint {
                frame: k,
                position: target,
                weight: 1.0,
            }],
        };
        let (out, _) = optimize_latents(&rec, &goal, &obj, OptSettings::default(), model).unwrap();
        let after = forward_kinematics(&out.sequence.poses[k], skel).unwrap().get(skel.pelvis()).xy();
        let w = (after - target).norm() / (mid - target).norm();
        way_wins += usize::from(w <= 0.7);
        ratios.push((r, w));
    }
    let (fast, time) = within(Duration::from_secs(600), t);
    let show: Vec<String> = ratios.iter().map(|(a, b)| format!("{a:.2}/{b:.2}")).collect();
    outcome(
        goal_wins >= 8 && way_wins >= 8 && fast,
        format!("goal ≥30% on {goal_wins}/10, waypoint ≥30% on {way_wins}/10 (after/before {}), {time}", show.join(" ")),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    // the hand-built oracle cases live in tests/evaluation.rs; here the
    // protocol counts and the three rules are re-checked end to end
    use reachgen::dataset::Provenance;
    use reachgen::evaluation::{build_goal_grid, distance_to_goal, foot_skate, is_success, SKATE_THRESHOLD, SUCCESS_RADIUS};
    let t = Instant::now();
    let s = Skeleton::desk();
    let rest = Pose::rest(&s, 0.9);
    let goals = build_goal_grid(&rest).goals.len();
    let rollouts = EvalConfig::default().rollouts(6);
    let slide = |xs: &[f64]| {
        let poses = xs.iter().map(|&x| rest.translated(Vector3::new(x, 0.0, 0.0))).collect();
        MotionSequence::new("hand", 30.0, poses, Provenance::Generated)
    };
    let wrist = forward_kinematics(&rest, &s).unwrap().get(s.right_wrist());
    let seq = slide(&[0.0, 0.005, 0.012, 0.018]);
    let fs = foot_skate(&seq, &s, SKATE_THRESHOLD).unwrap();
    let dtg = distance_to_goal(&seq, &GoalSpec::new(wrist + Vector3::new(0.143, 0.0, 0.0), 3), &s).unwrap();
    let near = is_success(&slide(&[0.0, 0.0, 0.0]), &GoalSpec::new(wrist + Vector3::new(0.0, 0.0999, 0.0), 2), &s, SUCCESS_RADIUS).unwrap();
    let far = is_success(&slide(&[0.0, 0.0, 0.0]), &GoalSpec::new(wrist + Vector3::new(0.0, 0.1001, 0.0), 2), &s, SUCCESS_RADIUS).unwrap();
    let pass = goals == 125 && rollouts == 3750 && fs == 1.0 / 3.0 && (dtg - 0.125).abs() < 1e-12 && near && !far;
    let (fast, time) = within(Duration::from_secs(5), t);
    outcome(
        pass && fast,
        format!("{goals} goals, {rollouts} rollouts, FS {fs:.4} (1/3 for 0.5/0.7/0.6 cm), DTG {:.2} cm (12.5), 10 cm rule {}, {time}", 100.0 * dtg, near && !far),
    )
}

// ---------------------------------------------------------------- 8

struct RunArtifacts {
    log: String,
    checkpoint: Vec<u8>,
    rollouts: String,
    aggregates: String,
}

fn small_run(workers: usize) -> RunArtifacts {
    let skel = Skeleton::desk();
    let corpus = generate_synthetic_corpus(
        &SyntheticGenConfig {
            locomotion: 20,
            reaching: 10,
            seed: SEED,
            ..SyntheticGenConfig::default()
        },
        &skel,
    )
    .unwrap();
    let model = Model::new(Preset::Desk.model_spec(skel.joint_count()), &skel, SEED).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ramp_epochs: 2,
        ..Preset::Desk.train_config(SEED)
    };
    let mut trainer = Trainer::new(model, &corpus, cfg).unwrap();
    trainer.run(&corpus, workers, |_| {}).unwrap();
    let poses = standing_starts(&skel, 1, SEED).unwrap();
    let eval = EvalConfig {
        samples: 1,
        duration: 30,
        axes: GridAxes::reduced(),
        ..EvalConfig::default()
    };
    let report = run_benchmark(&trainer.model, &eval, &poses, SEED, workers).unwrap();
    RunArtifacts {
        log: log_csv(&trainer.log),
        checkpoint: encode_checkpoint(&trainer),
        rollouts: rollouts_csv(&report),
        aggregates: aggregates_csv(&report),
    }
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let a = small_run(1);
    let b = small_run(1);
    let c = small_run(4);
    let same = |x: &RunArtifacts, y: &RunArtifacts| {
        x.log == y.log && x.checkpoint == y.checkpoint && x.rollouts == y.rollouts && x.aggregates == y.aggregates
    };
    let (rerun, workers) = (same(&a, &b), same(&a, &c));
    outcome(
        rerun && workers,
        format!(
            "rerun identical {rerun}, workers 1 vs 4 identical {workers} (log, {} byte checkpoint, CSVs), {:.1}s",
            a.checkpoint.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut lines = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        let line = format!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        println!("{line}");
        lines.push((o.pass, line));
    };
    if wanted(1) {
        report(1, "formula exactness", criterion_1());
    }
    if wanted(2) {
        report(2, "representation invariants", criterion_2());
    }
    if wanted(3) {
        report(3, "gradient correctness", criterion_3());
    }
    if wanted(6) {
        report(6, "benchmark protocol", criterion_6());
    }
    if wanted(8) {
        report(8, "reproducibility", criterion_8());
    }
    if wanted(4) || wanted(5) || wanted(7) {
        let tr = train_desk();
        if wanted(4) {
            report(4, "training smoke", criterion_4(&tr));
        }
        if wanted(5) {
            report(5, "goal-reaching improvement", criterion_5(&tr));
        }
        if wanted(7) {
            report(7, "latent optimization", criterion_7(&tr));
        }
    }
    println!("\nsummary");
    lines.sort_by(|a, b| a.1.cmp(&b.1));
    for (_, l) in &lines {
        println!("  {}", l.split(" (").next().unwrap_or(l));
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !lines.iter().all(|(p, _)| *p) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
