//! Fixed-length training clips, each paired with one goal.

use nalgebra::Vector2;
use rand::Rng;

use super::sequence::MotionSequence;
use crate::body::{heading_of, pose_delta, Pose, PoseDelta, Skeleton};
use crate::error::{Error, Result};
use crate::intention::{hindsight_goal, GoalSpec, Horizon};

/// `window_len` transitions starting at `start`. Goal frames are absolute
/// indices into the source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub sequence_id: String,
    pub start: usize,
    pub frames: Vec<Pose>,
    /// Delta into `frames[0]`; zero at the start of a sequence.
    pub prev_delta: PoseDelta,
    pub goal: GoalSpec,
    pub goal_heading: Vector2<f64>,
}

impl TrainingWindow {
    pub fn transitions(&self) -> usize {
        self.frames.len() - 1
    }
}

/// Draws a window start uniformly, then attaches the stored label (with
/// the heading at its frame) or a hindsight goal anchored at the start.
pub fn sample_training_window<R: Rng + ?Sized>(
    seq: &MotionSequence,
    window_len: usize,
    rng: &mut R,
    horizon: Horizon,
    skeleton: &Skeleton,
) -> Result<TrainingWindow> {
    if window_len == 0 || seq.len() < window_len + 1 {
        return Err(Error::SkipWindow {
            needed: window_len + 1,
            available: seq.len(),
        });
    }
    let start = rng.random_range(0..=seq.len() - 1 - window_len);
    window_at(seq, start, window_len, rng, horizon, skeleton)
}

pub fn window_at<R: Rng + ?Sized>(
    seq: &MotionSequence,
    start: usize,
    window_len: usize,
    rng: &mut R,
    horizon: Horizon,
    skeleton: &Skeleton,
) -> Result<TrainingWindow> {
    if start + window_len >= seq.len() {
        return Err(Error::SkipWindow {
            needed: start + window_len + 1,
            available: seq.len(),
        });
    }
    let (goal, goal_heading) = match &seq.label {
        Some(label) => (label.clone(), heading_of(&seq.poses[label.target_frame], skeleton)?),
        None => {
            let h = hindsight_goal(seq, start, rng, horizon, skeleton)?;
            (h.goal, h.goal_heading)
        }
    };
    let prev_delta = if start == 0 {
        PoseDelta::zero(skeleton.joint_count())
    } else {
        pose_delta(&seq.poses[start - 1], &seq.poses[start])?
    };
    Ok(TrainingWindow {
        sequence_id: seq.id.clone(),
        start,
        frames: seq.poses[start..=start + window_len].to_vec(),
        prev_delta,
        goal,
        goal_heading,
    })
}
