//! Per-sequence metrics: distance to goal, success and foot skating.

use crate::body::Skeleton;
use crate::dataset::MotionSequence;
use crate::error::{Error, Result};
use crate::intention::GoalSpec;

pub const SUCCESS_RADIUS: f64 = 0.10;
pub const SKATE_THRESHOLD: f64 = 0.0066;

/// Minimum distance between the goal joint and the goal over all frames.
pub fn distance_to_goal(seq: &MotionSequence, goal: &GoalSpec, skeleton: &Skeleton) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::InvalidConfig("distance to goal needs at least one frame".into()));
    }
    let joint = goal.joint_index(skeleton)?;
    let mut best = f64::INFINITY;
    for pose in &seq.poses {
        let p = crate::body::forward_kinematics(pose, skeleton)?.get(joint);
        best = best.min((p - goal.position).norm());
    }
    Ok(best)
}

/// Inclusive: a minimum distance of exactly `radius` counts as success.
pub fn is_success(seq: &MotionSequence, goal: &GoalSpec, skeleton: &Skeleton, radius: f64) -> Result<bool> {
    Ok(distance_to_goal(seq, goal, skeleton)? <= radius)
}

/// Fraction of frame transitions in which the lowest joint of the earlier
/// frame moves more than `threshold` (3D displacement).
pub fn foot_skate(seq: &MotionSequence, skeleton: &Skeleton, threshold: f64) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::InvalidConfig("foot skate needs at least two frames".into()));
    }
    let joints = seq.joint_positions(skeleton)?;
    let mut flagged = 0usize;
    for pair in joints.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let lowest = (0..now.len())
            .min_by(|a, b| now.get(*a).z.total_cmp(&now.get(*b).z))
            .expect("skeleton has joints");
        if (next.get(lowest) - now.get(lowest)).norm() > threshold {
            flagged += 1;
        }
    }
    Ok(flagged as f64 / (seq.len() - 1) as f64)
}
