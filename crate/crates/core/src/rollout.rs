//! Closed-loop generation: condition on the current pose and goal, decode a
//! delta, integrate, repeat.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body::diff::{condition_on, integrate_on, orthonormalize_on, GoalRow, TapePose};
use crate::body::{forward_kinematics, Pose, PoseDelta};
use crate::cvae::Model;
use crate::dataset::io::{read_motion, write_motion};
use crate::dataset::{MotionSequence, Provenance};
use crate::error::{Error, Result};
use crate::intention::{GoalSpec, IntentionVector};
use crate::nn::{Mode, Tape, Tensor, Var};
use crate::seed::{derive_seed, rng_for};

/// When the active goal advances to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SwitchPolicy {
    /// After the active goal's target frame has been generated.
    OnFrame,
    /// As soon as the target joint is within `radius` meters of the goal.
    OnReach { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSchedule {
    pub goals: Vec<GoalSpec>,
    pub policy: SwitchPolicy,
}

impl GoalSchedule {
    pub fn new(goals: Vec<GoalSpec>, policy: SwitchPolicy) -> Result<Self> {
        let s = Self { goals, policy };
        s.validate()?;
        Ok(s)
    }

    pub fn single(goal: GoalSpec) -> Self {
        Self {
            goals: vec![goal],
            policy: SwitchPolicy::OnFrame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.goals.is_empty() {
            return Err(Error::InvalidConfig("goal schedule is empty".into()));
        }
        for w in self.goals.windows(2) {
            if w[1].target_frame <= w[0].target_frame {
                return Err(Error::ScheduleOrder(format!(
                    "target frames {} and {} are not strictly increasing",
                    w[0].target_frame, w[1].target_frame
                )));
            }
        }
        if let SwitchPolicy::OnReach { radius } = self.policy {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidConfig("switch radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Divides every target frame by `factor` (rounded). Fails if two goals
/// would share a frame.
pub fn time_to_reach(schedule: &GoalSchedule, factor: f64) -> Result<GoalSchedule> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidConfig("speed-up factor must be positive".into()));
    }
    let goals = schedule
        .goals
        .iter()
        .map(|g| GoalSpec {
            target_frame: (g.target_frame as f64 / factor).round() as usize,
            ..g.clone()
        })
        .collect();
    GoalSchedule::new(goals, schedule.policy)
}

/// How latents are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SampleMode {
    /// `z = temperature · ε` with `ε ~ N(0, I)`.
    Sample { temperature: f64 },
    /// `z = 0`.
    Mean,
}

impl SampleMode {
    pub fn sample() -> Self {
        SampleMode::Sample { temperature: 1.0 }
    }
}

/// A generated motion with everything needed to replay or optimize it.
///
/// `sequence` holds the initial pose at index 0 followed by one pose per
/// generated frame, so it is one longer than the per-frame vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub sequence: MotionSequence,
    pub latents: Vec<Vec<f64>>,
    pub intentions: Vec<IntentionVector>,
    pub noise_seeds: Vec<u64>,
    /// Index into `schedule.goals` used to condition each frame.
    pub active_goal: Vec<usize>,
    pub schedule: GoalSchedule,
    pub mode: SampleMode,
    pub model_hash: String,
}

/// Everything in a record except the poses.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    latents: Vec<Vec<f64>>,
    intentions: Vec<IntentionVector>,
    noise_seeds: Vec<u64>,
    active_goal: Vec<usize>,
    schedule: GoalSchedule,
    mode: SampleMode,
    model_hash: String,
}

impl RolloutRecord {
    pub fn frames(&self) -> usize {
        self.latents.len()
    }

    pub fn initial_pose(&self) -> &Pose {
        &self.sequence.poses[0]
    }

    /// Writes `<stem>.rgm` (motion) and `<stem>.latents.json` (sidecar).
    pub fn save(&self, dir: &Path, stem: &str, skeleton_hash: &str) -> Result<()> {
        write_motion(&dir.join(format!("{stem}.rgm")), &self.sequence, skeleton_hash)?;
        let path = dir.join(format!("{stem}.latents.json"));
        let side = Sidecar {
            latents: self.latents.clone(),
            intentions: self.intentions.clone(),
            noise_seeds: self.noise_seeds.clone(),
            active_goal: self.active_goal.clone(),
            schedule: self.schedule.clone(),
            mode: self.mode,
            model_hash: self.model_hash.clone(),
        };
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let motion = read_motion(&dir.join(format!("{stem}.rgm")))?;
        let path = dir.join(format!("{stem}.latents.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let rec = RolloutRecord {
            sequence: motion.sequence,
            latents: side.latents,
            intentions: side.intentions,
            noise_seeds: side.noise_seeds,
            active_goal: side.active_goal,
            schedule: side.schedule,
            mode: side.mode,
            model_hash: side.model_hash,
        };
        if rec.sequence.len() != rec.latents.len() + 1 {
            return Err(Error::CorruptFile("sidecar does not match motion length".into()));
        }
        Ok(rec)
    }
}

/// One differentiable generation step. Returns the next pose, the raw
/// delta and the condition.
pub(crate) fn step_on(
    tape: &mut Tape,
    model: &Model,
    pose: &TapePose,
    prev_delta: Var,
    goal: &GoalSpec,
    frame: usize,
    z: Var,
) -> Result<(TapePose, Var, Var)> {
    let joint = goal.joint_index(&model.skeleton)?;
    let row = GoalRow {
        position: goal.position,
        target_frame: goal.target_frame,
        current_frame: frame,
        heading: None,
    };
    let cond = condition_on(tape, pose, prev_delta, &[row], joint, model.tape_skeleton())?;
    let delta = model.decode_on(tape, z, cond, Mode::Eval)?;
    let next = integrate_on(tape, pose, delta);
    let next = orthonormalize_on(tape, &next);
    Ok((next, delta, cond))
}

fn intention_of(cond: &[f64]) -> IntentionVector {
    IntentionVector::from_slice(&cond[cond.len() - IntentionVector::DIM..])
}

/// Index of the goal after frame `frame` has been produced.
fn advance(schedule: &GoalSchedule, active: usize, frame: usize, pose: &Pose, model: &Model) -> Result<usize> {
    if active + 1 >= schedule.goals.len() {
        return Ok(active);
    }
    let goal = &schedule.goals[active];
    let done = match schedule.policy {
        SwitchPolicy::OnFrame => frame >= goal.target_frame,
        SwitchPolicy::OnReach { radius } => {
            let j = goal.joint_index(&model.skeleton)?;
            let p = forward_kinematics(pose, &model.skeleton)?.get(j);
            (p - goal.position).norm() <= radius
        }
    };
    Ok(if done { active + 1 } else { active })
}

enum Latents<'a> {
    Draw { mode: SampleMode, seed: u64 },
    Given(&'a [Vec<f64>]),
}

fn run(
    model: &Model,
    initial: &Pose,
    schedule: &GoalSchedule,
    duration: usize,
    latents: Latents<'_>,
) -> Result<RolloutRecord> {
    schedule.validate()?;
    if initial.joint_count() != model.spec.joints() || !initial.is_finite() {
        return Err(Error::InvalidConfig("initial pose does not fit the model".into()));
    }
    let dim = model.spec.latent;
    let (mode, base_seed) = match latents {
        Latents::Draw { mode, seed } => (mode, seed),
        Latents::Given(_) => (SampleMode::Mean, 0),
    };
    let mut rec = RolloutRecord {
        sequence: MotionSequence::new("rollout", 30.0, vec![initial.clone()], Provenance::Generated),
        latents: Vec::with_capacity(duration),
        intentions: Vec::with_capacity(duration),
        noise_seeds: Vec::with_capacity(duration),
        active_goal: Vec::with_capacity(duration),
        schedule: schedule.clone(),
        mode,
        model_hash: model.hash(),
    };
    let mut pose = initial.clone();
    let mut prev = PoseDelta::zero(model.spec.joints()).to_vec();
    let mut active = 0;
    for i in 0..duration {
        let noise_seed = derive_seed(base_seed, &[i as u64]);
        let z = match &latents {
            Latents::Given(zs) => zs[i].clone(),
            Latents::Draw {
                mode: SampleMode::Mean, ..
            } => vec![0.0; dim],
            Latents::Draw {
                mode: SampleMode::Sample { temperature },
                ..
            } => {
                let mut rng = rng_for(noise_seed, &[]);
                (0..dim)
                    .map(|_| temperature * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            }
        };
        let goal = &schedule.goals[active];
        let mut tape = Tape::new();
        let pv = TapePose::constant(&mut tape, &[&pose]);
        let dv = tape.constant(Tensor::row(prev));
        let zv = tape.constant(Tensor::row(z.clone()));
        let (next, delta, cond) = step_on(&mut tape, model, &pv, dv, goal, i, zv)?;
        let next = next.value(&tape, 0);
        if !next.is_finite() {
            return Err(Error::NumericFault {
                context: format!("rollout frame {}", i + 1),
                layer: None,
            });
        }
        rec.intentions.push(intention_of(tape.value(cond).data()));
        rec.latents.push(z);
        rec.noise_seeds.push(noise_seed);
        rec.active_goal.push(active);
        prev = tape.value(delta).data().to_vec();
        active = advance(schedule, active, i + 1, &next, model)?;
        rec.sequence.poses.push(next.clone());
        pose = next;
    }
    Ok(rec)
}

/// Generates `duration` new frames from `initial`.
pub fn generate(
    initial: &Pose,
    schedule: &GoalSchedule,
    duration: usize,
    model: &Model,
    seed: u64,
    mode: SampleMode,
) -> Result<RolloutRecord> {
    if duration == 0 {
        return Err(Error::InvalidConfig("duration must be at least one frame".into()));
    }
    if let SampleMode::Sample { temperature } = mode {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be non-negative".into()));
        }
    }
    run(model, initial, schedule, duration, Latents::Draw { mode, seed })
}

/// Re-decodes the recorded latents. Requires the model that produced them.
pub fn replay(record: &RolloutRecord, model: &Model) -> Result<MotionSequence> {
    let hash = model.hash();
    if hash != record.model_hash {
        return Err(Error::ModelMismatch {
            expected: record.model_hash.clone(),
            got: hash,
        });
    }
    replay_latents(record, &record.latents, model).map(|r| r.sequence)
}

/// Runs the record's initial pose and schedule with different latents.
pub fn replay_latents(record: &RolloutRecord, latents: &[Vec<f64>], model: &Model) -> Result<RolloutRecord> {
    if latents.iter().any(|z| z.len() != model.spec.latent) {
        return Err(Error::DimensionMismatch {
            what: "latent",
            expected: model.spec.latent,
            got: latents.iter().map(Vec::len).find(|&n| n != model.spec.latent).unwrap_or(0),
        });
    }
    let mut out = run(
        model,
        record.initial_pose(),
        &record.schedule,
        latents.len(),
        Latents::Given(latents),
    )?;
    out.mode = record.mode;
    out.noise_seeds = record.noise_seeds.clone();
    Ok(out)
}
