use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use reachgen::body::{forward_kinematics, Pose, Skeleton};
use reachgen::cvae::{load_checkpoint, log_csv, save_checkpoint, Model, Trainer};
use reachgen::dataset::{
    filter_floating, generate_synthetic_corpus, load_corpus, read_motion, save_corpus, split_dataset,
    CorpusManifest, MotionSequence, FLOAT_THRESHOLD,
};
use reachgen::evaluation::{distance_to_goal, emit_report, foot_skate, run_benchmark, standing_starts, SKATE_THRESHOLD, SUCCESS_RADIUS};
use reachgen::intention::GoalSpec;
use reachgen::latent_opt::{optimize_latents, OptObjective, Waypoint};
use reachgen::rollout::{generate as roll, time_to_reach, GoalSchedule, RolloutRecord, SampleMode, SwitchPolicy};
use reachgen::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{EvaluateArgs, GenerateArgs, InspectArgs, OptimizeArgs, TrainArgs};

pub fn parse_point(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([x, y, z]),
        _ => Err(format!("expected x,y,z in meters, got `{s}`")),
    }
}

pub fn parse_waypoint(s: &str) -> std::result::Result<(usize, [f64; 2]), String> {
    let (frame, xy) = s.split_once(':').ok_or_else(|| format!("expected frame:x,y, got `{s}`"))?;
    let frame = frame.trim().parse::<usize>().map_err(|e| format!("frame `{frame}`: {e}"))?;
    let v: Vec<f64> = xy
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y] if x.is_finite() && y.is_finite() => Ok((frame, [x, y])),
        _ => Err(format!("expected frame:x,y, got `{s}`")),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::io(path, source)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'static str,
    command: &'a [String],
    seed: u64,
    workers: usize,
    inputs: Vec<(String, String)>,
}

pub struct Context {
    pub cfg: RunConfig,
    pub skeleton: Skeleton,
    args: Vec<String>,
    inputs: Vec<(String, String)>,
}

impl Context {
    /// Creates the run directory and writes the resolved configuration into it.
    pub fn new(cfg: RunConfig, config_file: Option<&Path>, args: &[String]) -> Result<Self> {
        let skeleton = match &cfg.skeleton {
            Some(p) => Skeleton::load(p)?,
            None => Skeleton::desk(),
        };
        fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
        write(&cfg.out.join("resolved_config.toml"), &cfg.to_toml())?;
        let mut ctx = Self {
            cfg,
            skeleton,
            args: args.to_vec(),
            inputs: Vec::new(),
        };
        if let Some(p) = config_file {
            ctx.input(p)?;
        }
        if let Some(p) = ctx.cfg.skeleton.clone() {
            ctx.input(&p)?;
        }
        ctx.manifest()?;
        Ok(ctx)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let hash = file_hash(path)?;
        self.inputs.push((path.display().to_string(), hash));
        Ok(())
    }

    /// `run.json`: program version, argv, seed and hashes of every input file.
    fn manifest(&self) -> Result<()> {
        let m = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            command: &self.args,
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            inputs: self.inputs.clone(),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Parse(e.to_string()))?;
        write(&self.cfg.out.join("run.json"), &(text + "\n"))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn load_model(&mut self, path: &Path) -> Result<Trainer> {
        self.input(path)?;
        self.manifest()?;
        load_checkpoint(path, Some(&self.skeleton))
    }
}

/// Synthetic corpus, float filter and split, in memory.
fn build_corpus(ctx: &Context) -> Result<(Vec<MotionSequence>, CorpusManifest)> {
    let raw = generate_synthetic_corpus(&ctx.cfg.data, &ctx.skeleton)?;
    let kept = filter_floating(raw, &ctx.skeleton, FLOAT_THRESHOLD)?;
    let split = split_dataset(&kept, ctx.cfg.seed)?;
    let manifest = CorpusManifest::new(&ctx.skeleton.hash(), ctx.cfg.data.fps, ctx.cfg.seed, &kept, &split);
    Ok((kept, manifest))
}

pub fn gen_data(ctx: &Context) -> Result<()> {
    let (seqs, manifest) = build_corpus(ctx)?;
    let dir = ctx.out("data");
    save_corpus(&dir, &seqs, &manifest)?;
    let split = manifest.split();
    println!(
        "wrote {} sequences to {} (train {}, val {}, test {})",
        seqs.len(),
        dir.display(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn train(ctx: &mut Context, args: &TrainArgs) -> Result<()> {
    let (seqs, manifest) = match &args.data {
        Some(dir) => {
            ctx.input(&dir.join("manifest.json"))?;
            ctx.manifest()?;
            let (manifest, seqs) = load_corpus(dir)?;
            (seqs, manifest)
        }
        None => build_corpus(ctx)?,
    };
    if manifest.skeleton_hash != ctx.skeleton.hash() {
        return Err(Error::SkeletonMismatch {
            expected: manifest.skeleton_hash,
            got: ctx.skeleton.hash(),
        });
    }
    let split = manifest.split();
    let train: Vec<MotionSequence> = seqs.into_iter().filter(|s| split.train.contains(&s.id)).collect();

    let mut trainer = match &args.resume {
        Some(p) => ctx.load_model(p)?,
        None => {
            let spec = ctx.cfg.model.spec(ctx.skeleton.joint_count());
            let model = Model::new(spec, &ctx.skeleton, ctx.cfg.seed)?;
            Trainer::new(model, &train, ctx.cfg.train.clone())?
        }
    };
    let stop = args.epochs.map_or(trainer.config.epochs, |e| e.min(trainer.config.epochs));
    let ckpt = ctx.out("model.ckpt");
    let log = ctx.out("train_log.csv");
    eprintln!("training on {} sequences, epochs {}..{stop}", train.len(), trainer.epoch);
    while trainer.epoch < stop {
        let row = trainer.step_epoch(&train, ctx.cfg.workers)?;
        eprintln!(
            "epoch {:>4} s {:>2} loss {:.5} (rec {:.5} kl {:.5}) lr {:.2e}",
            row.epoch, row.s, row.loss.total, row.loss.rec, row.loss.kl, row.lr
        );
        write(&log, &log_csv(&trainer.log))?;
        save_checkpoint(&trainer, &ckpt)?;
    }
    write(&log, &log_csv(&trainer.log))?;
    save_checkpoint(&trainer, &ckpt)?;
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn start_pose(ctx: &mut Context, start: Option<&Path>) -> Result<Pose> {
    match start {
        Some(p) => {
            ctx.input(p)?;
            ctx.manifest()?;
            let file = read_motion(p)?;
            if file.skeleton_hash != ctx.skeleton.hash() {
                return Err(Error::SkeletonMismatch {
                    expected: file.skeleton_hash,
                    got: ctx.skeleton.hash(),
                });
            }
            file.sequence
                .poses
                .into_iter()
                .next()
                .ok_or_else(|| Error::CorruptFile(format!("{} has no frames", p.display())))
        }
        None => Ok(standing_starts(&ctx.skeleton, 1, ctx.cfg.seed)?.remove(0)),
    }
}

fn schedule_from(goals: &[[f64; 3]], target: usize, policy: SwitchPolicy) -> Result<GoalSchedule> {
    let n = goals.len();
    let specs = goals
        .iter()
        .enumerate()
        .map(|(i, g)| GoalSpec::new(Vector3::new(g[0], g[1], g[2]), (target * (i + 1)) / n))
        .collect();
    GoalSchedule::new(specs, policy)
}

pub fn generate(ctx: &mut Context, args: &GenerateArgs) -> Result<()> {
    let trainer = ctx.load_model(&args.checkpoint)?;
    let model = &trainer.model;
    let initial = start_pose(ctx, args.start.as_deref())?;
    let policy = match args.reach_radius {
        Some(radius) => SwitchPolicy::OnReach { radius },
        None => SwitchPolicy::OnFrame,
    };
    let mut schedule = schedule_from(&args.goal, args.target_frame.unwrap_or(args.duration), policy)?;
    if let Some(f) = args.speedup {
        schedule = time_to_reach(&schedule, f)?;
    }
    let mode = if args.mean {
        SampleMode::Mean
    } else {
        SampleMode::Sample {
            temperature: args.temperature,
        }
    };
    let record = roll(&initial, &schedule, args.duration, model, ctx.cfg.seed, mode)?;
    record.save(&ctx.cfg.out, "rollout", &ctx.skeleton.hash())?;
    for (i, g) in schedule.goals.iter().enumerate() {
        let d = distance_to_goal(&record.sequence, g, &ctx.skeleton)?;
        println!(
            "goal {i} ({:.2},{:.2},{:.2}) frame {}: min distance {:.1} cm",
            g.position.x,
            g.position.y,
            g.position.z,
            g.target_frame,
            d * 100.0
        );
    }
    println!("wrote {} frames to {}", record.sequence.len(), ctx.out("rollout.rgm").display());
    Ok(())
}

pub fn evaluate(ctx: &mut Context, args: &EvaluateArgs) -> Result<()> {
    let trainer = ctx.load_model(&args.checkpoint)?;
    let poses = standing_starts(&ctx.skeleton, ctx.cfg.eval_poses, ctx.cfg.seed)?;
    let report = run_benchmark(&trainer.model, &ctx.cfg.eval, &poses, ctx.cfg.seed, ctx.cfg.workers)?;
    emit_report(&report, &ctx.cfg.out)?;
    println!(
        "rollouts {} sr {:.3} fs {:.3} dtg {:.1} cm failed {}",
        report.rows.len(),
        report.sr,
        report.fs,
        report.dtg_cm,
        report.failed
    );
    Ok(())
}

pub fn optimize(ctx: &mut Context, args: &OptimizeArgs) -> Result<()> {
    let trainer = ctx.load_model(&args.checkpoint)?;
    let model = &trainer.model;
    for ext in ["rgm", "latents.json"] {
        ctx.input(&args.record.join(format!("{}.{ext}", args.stem)))?;
    }
    ctx.manifest()?;
    let record = RolloutRecord::load(&args.record, &args.stem)?;
    let last = record.schedule.goals.last().expect("schedule is non-empty").clone();
    let goal = match args.goal {
        Some(g) => GoalSpec {
            position: Vector3::new(g[0], g[1], g[2]),
            ..last
        },
        None => last,
    };
    let o = &ctx.cfg.optimize;
    let objective = OptObjective {
        w_goal: o.w_goal,
        w_prior: o.w_prior,
        waypoints: args
            .waypoint
            .iter()
            .map(|&(frame, [x, y])| Waypoint {
                frame,
                position: Vector2::new(x, y),
                weight: args.waypoint_weight,
            })
            .collect(),
    };
    let (out, report) = optimize_latents(&record, &goal, &objective, o.settings(), model)?;
    out.save(&ctx.cfg.out, "optimized", &ctx.skeleton.hash())?;
    write(&ctx.out("opt_log.csv"), &report.to_csv())?;
    println!(
        "final-frame distance {:.1} cm -> {:.1} cm after {} steps",
        report.initial_distance * 100.0,
        report.final_distance * 100.0,
        report.iterations
    );
    Ok(())
}

pub fn inspect(ctx: &mut Context, args: &InspectArgs) -> Result<()> {
    ctx.input(&args.file)?;
    ctx.manifest()?;
    let file = read_motion(&args.file)?;
    if file.skeleton_hash != ctx.skeleton.hash() {
        return Err(Error::SkeletonMismatch {
            expected: file.skeleton_hash,
            got: ctx.skeleton.hash(),
        });
    }
    let seq = &file.sequence;
    let skel = &ctx.skeleton;
    println!("id {} ({})", seq.id, seq.provenance.as_str());
    println!("frames {} at {} fps ({:.2} s)", seq.len(), seq.fps, seq.duration_seconds());
    if let (Some(a), Some(b)) = (seq.poses.first(), seq.poses.last()) {
        let p = skel.pelvis();
        let (a, b) = (forward_kinematics(a, skel)?.get(p), forward_kinematics(b, skel)?.get(p));
        println!("pelvis travel {:.2} m", (b - a).xy().norm());
    }
    println!("foot skate {:.3}", foot_skate(seq, skel, SKATE_THRESHOLD)?);
    if let Some(g) = args.goal {
        let goal = GoalSpec::new(Vector3::new(g[0], g[1], g[2]), seq.len().saturating_sub(1));
        let d = distance_to_goal(seq, &goal, skel)?;
        println!("distance to goal {:.1} cm ({})", d * 100.0, if d <= SUCCESS_RADIUS { "success" } else { "miss" });
    }
    Ok(())
}
