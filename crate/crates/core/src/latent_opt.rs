//! Refines a rollout by gradient descent on its latent sequence. The whole
//! generation loop is rebuilt on one tape each iteration, so the goal and
//! waypoint terms reach every latent.

use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::body::diff::{joint_positions_on, TapePose};
use crate::body::PoseDelta;
use crate::cvae::Model;
use crate::error::{Error, Result};
use crate::intention::GoalSpec;
use crate::nn::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::rollout::{replay_latents, step_on, RolloutRecord};

/// Pull the pelvis ground projection toward `position` at `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Index into the rollout sequence (1 is the first generated frame).
    pub frame: usize,
    pub position: Vector2<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptObjective {
    pub w_goal: f64,
    pub w_prior: f64,
    pub waypoints: Vec<Waypoint>,
}

impl Default for OptObjective {
    fn default() -> Self {
        Self {
            w_goal: 1.0,
            w_prior: 1e-3,
            waypoints: Vec::new(),
        }
    }
}

impl OptObjective {
    pub fn validate(&self, frames: usize) -> Result<()> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(self.w_goal) || !ok(self.w_prior) || !self.waypoints.iter().all(|w| ok(w.weight)) {
            return Err(Error::InvalidConfig("objective weights must be non-negative".into()));
        }
        if let Some(w) = self.waypoints.iter().find(|w| w.frame == 0 || w.frame > frames) {
            return Err(Error::InvalidConfig(format!(
                "waypoint frame {} outside 1..={frames}",
                w.frame
            )));
        }
        Ok(())
    }
}

/// One waypoint per curve sample.
pub fn waypoints_from_curve(curve: &[Vector2<f64>], frames: &[usize], weight: f64) -> Result<Vec<Waypoint>> {
    if curve.len() != frames.len() {
        return Err(Error::DimensionMismatch {
            what: "curve frames",
            expected: curve.len(),
            got: frames.len(),
        });
    }
    if frames.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ScheduleOrder("waypoint frames must increase".into()));
    }
    Ok(curve
        .iter()
        .zip(frames)
        .map(|(p, &frame)| Waypoint {
            frame,
            position: *p,
            weight,
        })
        .collect())
}

/// Objective parts at one latent setting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OptTerms {
    pub total: f64,
    pub norm: f64,
    pub goal: f64,
    pub waypoint: f64,
}

/// Value and latent gradient of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct OptEval {
    pub terms: OptTerms,
    pub gradient: Vec<Vec<f64>>,
}

/// Evaluates `w_prior·½Σ‖z‖² + w_goal·‖joint_T − g‖² + Σ w_k‖pelvis_xy(t_k) − p_k‖²`
/// through the full rollout, conditioning each frame on the record's active
/// goal.
pub fn latent_objective(
    record: &RolloutRecord,
    latents: &[Vec<f64>],
    goal: &GoalSpec,
    objective: &OptObjective,
    model: &Model,
) -> Result<OptEval> {
    let frames = latents.len();
    if frames == 0 || frames > record.frames() {
        return Err(Error::InvalidConfig("latent sequence does not fit the record".into()));
    }
    objective.validate(frames)?;
    let skel = &model.skeleton;
    let target = goal.joint_index(skel)?;
    let pelvis = skel.pelvis();

    let mut tape = Tape::new();
    let zs: Vec<Var> = latents.iter().map(|z| tape.variable(Tensor::row(z.clone()))).collect();
    let mut pose = TapePose::constant(&mut tape, &[record.initial_pose()]);
    let mut prev = tape.constant(Tensor::row(PoseDelta::zero(model.spec.joints()).to_vec()));
    let mut waypoint_terms = Vec::new();
    for (i, z) in zs.iter().enumerate() {
        let active = &record.schedule.goals[record.active_goal[i]];
        let (next, delta, _) = step_on(&mut tape, model, &pose, prev, active, i, *z)?;
        pose = next;
        prev = delta;
        for w in objective.waypoints.iter().filter(|w| w.frame == i + 1) {
            let pos = joint_positions_on(&mut tape, &pose, model.tape_skeleton());
            let xy = tape.gather(pos, &[3 * pelvis, 3 * pelvis + 1]);
            let p = tape.constant(Tensor::row(vec![w.position.x, w.position.y]));
            let d = tape.sub(xy, p);
            let sq = tape.sum_sq(d);
            waypoint_terms.push((sq, w.weight));
        }
    }
    let pos = joint_positions_on(&mut tape, &pose, model.tape_skeleton());
    let wrist = tape.gather(pos, &[3 * target, 3 * target + 1, 3 * target + 2]);
    let g = tape.constant(Tensor::row(goal.position.iter().copied().collect()));
    let d = tape.sub(wrist, g);
    let goal_sq = tape.sum_sq(d);

    let mut norm_parts = zs.iter().map(|z| tape.sum_sq(*z)).collect::<Vec<_>>().into_iter();
    let mut norm = norm_parts.next().expect("at least one frame");
    for n in norm_parts {
        norm = tape.add(norm, n);
    }
    let norm = tape.scale(norm, 0.5);

    let mut total = tape.scale(goal_sq, objective.w_goal);
    let prior = tape.scale(norm, objective.w_prior);
    total = tape.add(total, prior);
    let mut waypoint = 0.0;
    for (sq, w) in waypoint_terms {
        waypoint += w * tape.value(sq).item();
        let t = tape.scale(sq, w);
        total = tape.add(total, t);
    }
    let terms = OptTerms {
        total: tape.value(total).item(),
        norm: tape.value(norm).item(),
        goal: tape.value(goal_sq).item(),
        waypoint,
    };
    if !(terms.total.is_finite()) {
        return Err(Error::NumericFault {
            context: "latent objective".into(),
            layer: None,
        });
    }
    let grads = tape.backward(total, &Tensor::scalar(1.0), &model.store)?;
    let gradient = zs
        .iter()
        .map(|z| grads.var(*z).map_or_else(|| vec![0.0; model.spec.latent], |g| g.data().to_vec()))
        .collect();
    Ok(OptEval { terms, gradient })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptReport {
    /// Objective before each update.
    pub history: Vec<OptTerms>,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub iterations: usize,
}

impl OptReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,l_opt,l_norm,l_goal,l_waypoint,distance\n");
        for (i, t) in self.history.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:e},{:e},{:e},{:e},{:e}",
                t.total,
                t.norm,
                t.goal,
                t.waypoint,
                t.goal.sqrt()
            );
        }
        let _ = writeln!(out, "# initial_distance={:e} final_distance={:e}", self.initial_distance, self.final_distance);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptSettings {
    pub steps: usize,
    pub lr: f64,
}

impl Default for OptSettings {
    fn default() -> Self {
        Self { steps: 100, lr: 1e-2 }
    }
}

fn final_distance(record: &RolloutRecord, goal: &GoalSpec, model: &Model) -> Result<f64> {
    let last = record.sequence.poses.last().expect("record has poses");
    let j = goal.joint_index(&model.skeleton)?;
    Ok((crate::body::forward_kinematics(last, &model.skeleton)?.get(j) - goal.position).norm())
}

/// Adam on the latents, then a replay with the result.
pub fn optimize_latents(
    record: &RolloutRecord,
    goal: &GoalSpec,
    objective: &OptObjective,
    settings: OptSettings,
    model: &Model,
) -> Result<(RolloutRecord, OptReport)> {
    if model.hash() != record.model_hash {
        return Err(Error::ModelMismatch {
            expected: record.model_hash.clone(),
            got: model.hash(),
        });
    }
    if !(settings.lr > 0.0 && settings.lr.is_finite()) {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    objective.validate(record.frames())?;
    let dim = model.spec.latent;
    let mut flat: Vec<f64> = record.latents.concat();
    let mut adam = Adam::new(AdamConfig::constant(settings.lr), [flat.len()]);
    let mut history = Vec::with_capacity(settings.steps);
    for _ in 0..settings.steps {
        let latents: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let eval = latent_objective(record, &latents, goal, objective, model)?;
        history.push(eval.terms);
        adam.step_flat(&mut flat, &eval.gradient.concat())?;
    }
    let latents: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
    let out = replay_latents(record, &latents, model)?;
    let report = OptReport {
        history,
        initial_distance: final_distance(record, goal, model)?,
        final_distance: final_distance(&out, goal, model)?,
        iterations: settings.steps,
    };
    Ok((out, report))
}
