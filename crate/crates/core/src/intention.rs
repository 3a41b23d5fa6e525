//! Intention features: the per-frame guidance that steers generation toward
//! a goal, hindsight pseudo-goals for unlabeled motion, and assembly of the
//! decoder's condition vector.
//!
//! All features here are computed in the world frame. [`IntentionVector::to_body_frame`]
//! rotates them into the yaw-canonical frame used by the network so that the
//! full condition is independent of the world heading.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::body::pose::normalize_xy;
use crate::body::rotation::rotate_z;
use crate::body::skeleton::RIGHT_WRIST;
use crate::body::{forward_kinematics, heading_of, Pose, PoseDelta, Skeleton};
use crate::dataset::MotionSequence;
use crate::error::{Error, Result};

/// A 3D goal for one joint, to be reached at `target_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub position: Vector3<f64>,
    pub target_frame: usize,
    #[serde(default = "default_joint")]
    pub target_joint: String,
}

fn default_joint() -> String {
    RIGHT_WRIST.to_string()
}

impl GoalSpec {
    pub fn new(position: Vector3<f64>, target_frame: usize) -> Self {
        Self {
            position,
            target_frame,
            target_joint: default_joint(),
        }
    }

    pub fn for_joint(mut self, joint: impl Into<String>) -> Self {
        self.target_joint = joint.into();
        self
    }

    pub fn joint_index(&self, skeleton: &Skeleton) -> Result<usize> {
        skeleton
            .index_of(&self.target_joint)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown target joint {}", self.target_joint)))
    }
}

/// `(wrist, orientation, pelvis)` intention components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntentionVector {
    pub wrist: Vector3<f64>,
    pub orientation: Vector2<f64>,
    pub pelvis: Vector2<f64>,
}

impl IntentionVector {
    pub const DIM: usize = 7;

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.wrist.x,
            self.wrist.y,
            self.wrist.z,
            self.orientation.x,
            self.orientation.y,
            self.pelvis.x,
            self.pelvis.y,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            wrist: Vector3::new(v[0], v[1], v[2]),
            orientation: Vector2::new(v[3], v[4]),
            pelvis: Vector2::new(v[5], v[6]),
        }
    }

    /// Expresses every component in the frame of a body with heading `yaw`.
    pub fn to_body_frame(&self, yaw: f64) -> Self {
        let rot2 = |v: &Vector2<f64>| {
            let r = rotate_z(&Vector3::new(v.x, v.y, 0.0), -yaw);
            Vector2::new(r.x, r.y)
        };
        Self {
            wrist: rotate_z(&self.wrist, -yaw),
            orientation: rot2(&self.orientation),
            pelvis: rot2(&self.pelvis),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Which reference direction the orientation intention compares against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrientationMode {
    /// Training: the body heading stored for the goal frame.
    Train { goal_heading: Vector2<f64> },
    /// Inference: the pelvis-to-goal direction.
    Infer,
}

/// Frames left until the goal, never below one.
pub fn remaining_frames(target_frame: usize, current_frame: usize) -> f64 {
    (target_frame as i64 - current_frame as i64).max(1) as f64
}

/// Average velocity (m/frame) the wrist needs to arrive at the goal in time.
pub fn wrist_intention(wrist_pos: &Vector3<f64>, goal: &GoalSpec, current_frame: usize) -> Vector3<f64> {
    (goal.position - wrist_pos) / remaining_frames(goal.target_frame, current_frame)
}

pub fn orientation_intention(
    pose: &Pose,
    goal: &GoalSpec,
    mode: OrientationMode,
    skeleton: &Skeleton,
) -> Result<Vector2<f64>> {
    let heading = heading_of(pose, skeleton)?;
    let desired = match mode {
        OrientationMode::Train { goal_heading } => normalize_xy(&goal_heading),
        OrientationMode::Infer => {
            let to_goal = goal.position - pose.translation;
            normalize_xy(&Vector2::new(to_goal.x, to_goal.y))
        }
    };
    Ok(desired - heading)
}

/// Ground-plane direction to the goal, saturated to norm `2(1 − e^{−d})`.
pub fn pelvis_intention(pelvis_pos: &Vector3<f64>, goal_pos: &Vector3<f64>) -> Vector2<f64> {
    let v = Vector2::new(goal_pos.x - pelvis_pos.x, goal_pos.y - pelvis_pos.y);
    let d = v.norm();
    if d < 1e-8 {
        return Vector2::zeros();
    }
    v * (2.0 * (-(-d).exp_m1()) / d)
}

/// All three components in the world frame.
pub fn compute_intention(
    pose: &Pose,
    goal: &GoalSpec,
    current_frame: usize,
    mode: OrientationMode,
    skeleton: &Skeleton,
) -> Result<IntentionVector> {
    let joints = forward_kinematics(pose, skeleton)?;
    let target = joints.get(goal.joint_index(skeleton)?);
    Ok(IntentionVector {
        wrist: wrist_intention(&target, goal, current_frame),
        orientation: orientation_intention(pose, goal, mode, skeleton)?,
        pelvis: pelvis_intention(&joints.get(skeleton.pelvis()), &goal.position),
    })
}

/// Inclusive bounds (in frames) on how far ahead a hindsight goal is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub min: usize,
    pub max: usize,
}

impl Default for Horizon {
    fn default() -> Self {
        Self { min: 15, max: 150 }
    }
}

/// A goal together with the body heading at its target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightGoal {
    pub goal: GoalSpec,
    pub goal_heading: Vector2<f64>,
}

/// Declares the target-joint position at a random future frame to be the goal.
pub fn hindsight_goal<R: Rng + ?Sized>(
    sequence: &MotionSequence,
    anchor_frame: usize,
    rng: &mut R,
    horizon: Horizon,
    skeleton: &Skeleton,
) -> Result<HindsightGoal> {
    hindsight_goal_for_joint(sequence, anchor_frame, rng, horizon, skeleton, RIGHT_WRIST)
}

pub fn hindsight_goal_for_joint<R: Rng + ?Sized>(
    sequence: &MotionSequence,
    anchor_frame: usize,
    rng: &mut R,
    horizon: Horizon,
    skeleton: &Skeleton,
    joint: &str,
) -> Result<HindsightGoal> {
    let last = sequence.len().saturating_sub(1);
    let lo = anchor_frame + horizon.min.max(1);
    if sequence.is_empty() || lo > last || horizon.max < horizon.min {
        return Err(Error::SkipWindow {
            needed: lo + 1,
            available: sequence.len(),
        });
    }
    let hi = (anchor_frame + horizon.max).min(last);
    let target_frame = rng.random_range(lo..=hi);
    let pose = &sequence.poses[target_frame];
    let goal = GoalSpec::new(Vector3::zeros(), target_frame).for_joint(joint);
    let joints = forward_kinematics(pose, skeleton)?;
    let position = joints.get(goal.joint_index(skeleton)?);
    Ok(HindsightGoal {
        goal: GoalSpec { position, ..goal },
        goal_heading: heading_of(pose, skeleton)?,
    })
}

/// Decoder condition: local state followed by the 7 intention values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    pub state: Vec<f64>,
    pub intention: [f64; 7],
}

impl ConditionVector {
    pub fn dim(joints: usize) -> usize {
        (1 + 6 + 6 * joints) + (3 + 6 + 6 * joints) + IntentionVector::DIM
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.state.clone();
        v.extend(self.intention);
        v
    }

    pub fn len(&self) -> usize {
        self.state.len() + IntentionVector::DIM
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Layout: `[t_z, yaw-free root 6D, joint 6D × J, previous delta (3 + 6 + 6J), intention (7)]`.
pub fn assemble_condition(
    pose: &Pose,
    prev_delta: &PoseDelta,
    intention: &IntentionVector,
) -> Result<ConditionVector> {
    if prev_delta.joint_count() != pose.joint_count() {
        return Err(Error::DimensionMismatch {
            what: "previous delta joints",
            expected: pose.joint_count(),
            got: prev_delta.joint_count(),
        });
    }
    let joints = pose.joint_count();
    let mut state = Vec::with_capacity(ConditionVector::dim(joints) - IntentionVector::DIM);
    state.push(pose.translation.z);
    let yaw = pose.root_orientation.yaw();
    state.extend(pose.root_orientation.rotated_z(-yaw).to_array());
    for r in &pose.joint_rotations {
        state.extend(r.to_array());
    }
    state.extend(prev_delta.to_vec());
    Ok(ConditionVector {
        state,
        intention: intention.to_array(),
    })
}

/// Full condition as seen by the network: world intention rotated into the
/// body frame, then assembled.
pub fn condition_for(
    pose: &Pose,
    prev_delta: &PoseDelta,
    goal: &GoalSpec,
    current_frame: usize,
    mode: OrientationMode,
    skeleton: &Skeleton,
) -> Result<ConditionVector> {
    let world = compute_intention(pose, goal, current_frame, mode, skeleton)?;
    let local = world.to_body_frame(pose.root_orientation.yaw());
    assemble_condition(pose, prev_delta, &local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn goal(x: f64, y: f64, z: f64, frame: usize) -> GoalSpec {
        GoalSpec::new(Vector3::new(x, y, z), frame)
    }

    #[test]
    fn wrist_intention_cases() {
        let w = Vector3::new(0.2, 0.3, 1.0);
        assert_eq!(wrist_intention(&w, &goal(0.2, 0.3, 1.0, 50), 3), Vector3::zeros());
        let v = wrist_intention(&Vector3::zeros(), &goal(1.0, 0.0, 0.0, 10), 0);
        assert_eq!(v, Vector3::new(0.1, 0.0, 0.0));
        let late = wrist_intention(&Vector3::zeros(), &goal(0.3, 0.0, 0.0, 10), 12);
        assert_eq!(late, Vector3::new(0.3, 0.0, 0.0));
    }

    #[test]
    fn orientation_intention_cases() {
        let s = Skeleton::desk();
        let pose = Pose::rest(&s, 0.93);
        let ahead = orientation_intention(&pose, &goal(0.0, 3.0, 1.0, 9), OrientationMode::Infer, &s).unwrap();
        assert_abs_diff_eq!(ahead, Vector2::zeros(), epsilon = 1e-15);
        let right = orientation_intention(&pose, &goal(2.0, 0.0, 1.0, 9), OrientationMode::Infer, &s).unwrap();
        assert_abs_diff_eq!(right, Vector2::new(1.0, -1.0), epsilon = 1e-15);
        let same = OrientationMode::Train {
            goal_heading: Vector2::new(0.0, 1.0),
        };
        let train = orientation_intention(&pose, &goal(5.0, 0.0, 1.0, 9), same, &s).unwrap();
        assert_abs_diff_eq!(train, Vector2::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn pelvis_intention_cases() {
        assert_eq!(pelvis_intention(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 2.0)), Vector2::zeros());
        let one = pelvis_intention(&Vector3::zeros(), &Vector3::new(2f64.ln(), 0.0, 0.0));
        assert_abs_diff_eq!(one, Vector2::new(1.0, 0.0), epsilon = 1e-15);
        let far = pelvis_intention(&Vector3::zeros(), &Vector3::new(100.0, 0.0, 0.0));
        assert!(far.norm() <= 2.0 && far.x > 1.999_999);
    }

    #[test]
    fn hindsight_on_static_sequence() {
        let s = Skeleton::desk();
        let pose = Pose::rest(&s, 0.93);
        let seq = MotionSequence::new("static", 30.0, vec![pose.clone(); 120], Provenance::Locomotion);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hs = hindsight_goal(&seq, 0, &mut rng, Horizon { min: 30, max: 90 }, &s).unwrap();
        assert!((30..=90).contains(&hs.goal.target_frame));
        let wrist = forward_kinematics(&pose, &s).unwrap().get(s.right_wrist());
        assert_eq!(hs.goal.position, wrist);
        assert_eq!(wrist_intention(&wrist, &hs.goal, 0), Vector3::zeros());

        let mut again = ChaCha8Rng::seed_from_u64(3);
        let hs2 = hindsight_goal(&seq, 0, &mut again, Horizon { min: 30, max: 90 }, &s).unwrap();
        assert_eq!(hs2.goal.target_frame, hs.goal.target_frame);

        assert!(matches!(
            hindsight_goal(&seq, 119, &mut rng, Horizon::default(), &s),
            Err(Error::SkipWindow { .. })
        ));
    }

    #[test]
    fn condition_length_and_zero_slots() {
        let s = Skeleton::desk();
        let j = s.joint_count();
        let c = assemble_condition(&Pose::rest(&s, 0.0), &PoseDelta::zero(j), &IntentionVector::default()).unwrap();
        assert_eq!(c.len(), ConditionVector::dim(j));
        let v = c.to_vec();
        assert!(v[7 + 6 * j..].iter().all(|&x| x == 0.0));
        assert_eq!(ConditionVector::dim(12), 167);
    }

    #[test]
    fn condition_ignores_global_yaw() {
        let s = Skeleton::desk();
        let j = s.joint_count();
        let base = Pose::rest(&s, 0.9);
        let i = IntentionVector {
            wrist: Vector3::new(0.1, 0.2, 0.3),
            ..Default::default()
        };
        let a = assemble_condition(&base, &PoseDelta::zero(j), &i).unwrap().to_vec();
        let b = assemble_condition(&base.rotated_z(2.1).translated(Vector3::new(3.0, -1.0, 0.0)), &PoseDelta::zero(j), &i)
            .unwrap()
            .to_vec();
        for k in 0..a.len() {
            assert_abs_diff_eq!(a[k], b[k], epsilon = 1e-15);
        }
    }
}
