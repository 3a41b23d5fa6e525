//! Frame-rate resampling, floating-clip filtering and train/val/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sequence::MotionSequence;
use crate::body::{Pose, RotationSixD, Skeleton};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const TARGET_FPS: f64 = 30.0;
pub const FLOAT_THRESHOLD: f64 = 0.20;

fn lerp6(a: &RotationSixD, b: &RotationSixD, w: f64) -> RotationSixD {
    RotationSixD::new(a.a * (1.0 - w) + b.a * w, a.b * (1.0 - w) + b.b * w)
}

/// Linear resampling of translations and 6D components; every output
/// rotation is re-orthonormalized. A label keeps its time, rounded to the
/// nearest output frame.
pub fn resample_fps(seq: &MotionSequence, target_fps: f64) -> Result<MotionSequence> {
    if seq.len() < 2 {
        return Err(Error::InvalidConfig(format!("{}: cannot resample a single frame", seq.id)));
    }
    if !(seq.fps > 0.0 && target_fps > 0.0) {
        return Err(Error::InvalidConfig("frame rates must be positive".into()));
    }
    if seq.fps == target_fps {
        return Ok(seq.clone());
    }
    let ratio = seq.fps / target_fps;
    let frames = (seq.duration_seconds() * target_fps).round() as usize + 1;
    let last = seq.len() - 1;
    let mut poses = Vec::with_capacity(frames);
    for k in 0..frames {
        let src = (k as f64 * ratio).min(last as f64);
        let i = (src.floor() as usize).min(last.saturating_sub(1));
        let w = src - i as f64;
        let (a, b) = (&seq.poses[i], &seq.poses[i + 1]);
        let pose = Pose {
            translation: a.translation * (1.0 - w) + b.translation * w,
            root_orientation: lerp6(&a.root_orientation, &b.root_orientation, w),
            joint_rotations: a
                .joint_rotations
                .iter()
                .zip(&b.joint_rotations)
                .map(|(x, y)| lerp6(x, y, w))
                .collect(),
        };
        poses.push(pose.orthonormalized()?);
    }
    let label = seq.label.clone().map(|mut l| {
        l.target_frame = ((l.target_frame as f64 / ratio).round() as usize).min(frames - 1);
        l
    });
    Ok(MotionSequence {
        id: seq.id.clone(),
        fps: target_fps,
        poses,
        label,
        provenance: seq.provenance,
    })
}

/// Drops sequences with any frame whose lower foot is strictly above `threshold`.
pub fn filter_floating(sequences: Vec<MotionSequence>, skeleton: &Skeleton, threshold: f64) -> Result<Vec<MotionSequence>> {
    let (l, r) = (skeleton.left_foot(), skeleton.right_foot());
    let mut kept = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let mut floating = false;
        for joints in seq.joint_positions(skeleton)? {
            if joints.get(l).z.min(joints.get(r).z) > threshold {
                floating = true;
                break;
            }
        }
        if !floating {
            kept.push(seq);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    /// Which part `id` belongs to.
    pub fn part_of(&self, id: &str) -> Option<&'static str> {
        let has = |v: &Vec<String>| v.iter().any(|x| x == id);
        if has(&self.train) {
            Some("train")
        } else if has(&self.val) {
            Some("val")
        } else if has(&self.test) {
            Some("test")
        } else {
            None
        }
    }
}

/// Seeded shuffle, then 80/10/10 by count.
pub fn split_dataset(sequences: &[MotionSequence], seed: u64) -> Result<DatasetSplit> {
    let n = sequences.len();
    if n < 10 {
        return Err(Error::TooFewSequences(n));
    }
    let mut ids: Vec<String> = sequences.iter().map(|s| s.id.clone()).collect();
    ids.shuffle(&mut rng_for(seed, &[0x5711]));
    let held = (n as f64 * 0.1).round() as usize;
    let test = ids.split_off(n - held);
    let val = ids.split_off(n - 2 * held);
    Ok(DatasetSplit { train: ids, val, test })
}
