//! Batched pose kinematics on the autodiff tape.
//!
//! These mirror the f64 routines in [`crate::body::pose`] and
//! [`crate::intention`] row by row, so a generated trajectory can be
//! differentiated end to end. Tests pin both routes to each other.

use nalgebra::{Vector2, Vector3};

use crate::body::{Pose, RotationSixD, Skeleton};
use crate::error::Result;
use crate::nn::{KinematicTree, Tape, Tensor, Var};

/// A batch of poses living on a tape: `[B, 3]`, `[B, 6]`, `[B, 6J]`.
#[derive(Debug, Clone, Copy)]
pub struct TapePose {
    pub translation: Var,
    pub root: Var,
    pub joints: Var,
}

/// Static per-skeleton data needed by the tape routines.
#[derive(Debug, Clone)]
pub struct TapeSkeleton {
    pub tree: KinematicTree,
    pub forward: [f64; 3],
    pub pelvis: usize,
    pub joints: usize,
}

impl TapeSkeleton {
    pub fn new(skeleton: &Skeleton) -> Self {
        let f = skeleton.forward();
        Self {
            tree: KinematicTree::from_skeleton(skeleton),
            forward: [f.x, f.y, f.z],
            pelvis: skeleton.pelvis(),
            joints: skeleton.joint_count(),
        }
    }
}

impl TapePose {
    pub fn constant(tape: &mut Tape, poses: &[&Pose]) -> Self {
        let rows = poses.len();
        let joints = poses[0].joint_count();
        let mut t = Vec::with_capacity(rows * 3);
        let mut r = Vec::with_capacity(rows * 6);
        let mut j = Vec::with_capacity(rows * 6 * joints);
        for p in poses {
            t.extend(p.translation.iter());
            r.extend(p.root_orientation.to_array());
            for q in &p.joint_rotations {
                j.extend(q.to_array());
            }
        }
        Self {
            translation: tape.constant(Tensor::from_vec(rows, 3, t)),
            root: tape.constant(Tensor::from_vec(rows, 6, r)),
            joints: tape.constant(Tensor::from_vec(rows, 6 * joints, j)),
        }
    }

    pub fn rows(&self, tape: &Tape) -> usize {
        tape.value(self.translation).rows()
    }

    /// Reads row `row` back as an f64 pose.
    pub fn value(&self, tape: &Tape, row: usize) -> Pose {
        let t = tape.value(self.translation).row_slice(row);
        let joints = tape.value(self.joints).row_slice(row);
        Pose {
            translation: Vector3::new(t[0], t[1], t[2]),
            root_orientation: RotationSixD::from_slice(tape.value(self.root).row_slice(row)),
            joint_rotations: joints.chunks_exact(6).map(RotationSixD::from_slice).collect(),
        }
    }

    /// Same layout as [`Pose::to_vec`].
    pub fn flat(&self, tape: &mut Tape) -> Var {
        tape.concat(&[self.translation, self.root, self.joints])
    }
}

/// Columns that pick the first two matrix columns out of row-major 3×3 blocks.
fn sixd_columns(blocks: usize) -> Vec<usize> {
    (0..blocks)
        .flat_map(|b| [0, 3, 6, 1, 4, 7].into_iter().map(move |c| 9 * b + c))
        .collect()
}

fn xy_columns(points: impl IntoIterator<Item = usize>) -> Vec<usize> {
    points.into_iter().flat_map(|p| [3 * p, 3 * p + 1]).collect()
}

/// Adds a `[B, 9 + 6J]` delta (pose-delta layout) to `prev`.
pub fn integrate_on(tape: &mut Tape, prev: &TapePose, delta: Var) -> TapePose {
    let joints = tape.value(prev.joints).cols();
    let yaw = tape.yaw(prev.root);
    let dt = tape.slice(delta, 0, 3);
    let dt = tape.rot_z(dt, yaw, 3, 1.0);
    let translation = tape.add(prev.translation, dt);
    let canon = tape.rot_z(prev.root, yaw, 3, -1.0);
    let dr = tape.slice(delta, 3, 6);
    let canon = tape.add(canon, dr);
    let root = tape.rot_z(canon, yaw, 3, 1.0);
    let dj = tape.slice(delta, 9, joints);
    let joints = tape.add(prev.joints, dj);
    TapePose {
        translation,
        root,
        joints,
    }
}

/// Replaces every 6D rotation by its Gram-Schmidt projection.
pub fn orthonormalize_on(tape: &mut Tape, pose: &TapePose) -> TapePose {
    let n = tape.value(pose.joints).cols() / 6;
    let root = tape.sixd_to_mat(pose.root);
    let root = tape.gather(root, &sixd_columns(1));
    let joints = tape.sixd_to_mat(pose.joints);
    let joints = tape.gather(joints, &sixd_columns(n));
    TapePose {
        translation: pose.translation,
        root,
        joints,
    }
}

/// Joint positions `[B, 3J]`.
pub fn joint_positions_on(tape: &mut Tape, pose: &TapePose, skel: &TapeSkeleton) -> Var {
    let root = tape.sixd_to_mat(pose.root);
    let locals = tape.sixd_to_mat(pose.joints);
    tape.forward_kinematics(pose.translation, root, locals, &skel.tree)
}

/// Per-row goal data for [`condition_on`].
#[derive(Debug, Clone, PartialEq)]
pub struct GoalRow {
    pub position: Vector3<f64>,
    pub target_frame: usize,
    pub current_frame: usize,
    /// Desired heading during training; `None` faces the goal instead.
    pub heading: Option<Vector2<f64>>,
}

/// Builds the `[B, C]` condition (state, previous delta, body-frame
/// intention) for a batch whose rows all target joint `target_joint`.
pub fn condition_on(
    tape: &mut Tape,
    pose: &TapePose,
    prev_delta: Var,
    goals: &[GoalRow],
    target_joint: usize,
    skel: &TapeSkeleton,
) -> Result<Var> {
    let rows = goals.len();
    let positions = joint_positions_on(tape, pose, skel);
    let goal = tape.constant(Tensor::from_vec(
        rows,
        3,
        goals.iter().flat_map(|g| g.position.iter().copied().collect::<Vec<_>>()).collect(),
    ));

    let joint = tape.gather(positions, &[3 * target_joint, 3 * target_joint + 1, 3 * target_joint + 2]);
    let to_goal = tape.sub(goal, joint);
    let inv = goals
        .iter()
        .flat_map(|g| {
            let r = 1.0 / crate::intention::remaining_frames(g.target_frame, g.current_frame);
            [r, r, r]
        })
        .collect();
    let wrist = tape.mul_const(to_goal, Tensor::from_vec(rows, 3, inv));

    let root_mat = tape.sixd_to_mat(pose.root);
    let fwd = tape.constant(Tensor::from_vec(rows, 3, skel.forward.repeat(rows)));
    let facing = tape.mat_vec(root_mat, fwd);
    let facing = tape.gather(facing, &[0, 1]);
    let heading = tape.normalize2(facing);
    let desired = if goals.iter().all(|g| g.heading.is_some()) {
        let h = goals.iter().flat_map(|g| {
            let h = g.heading.unwrap_or_default();
            [h.x, h.y]
        });
        let h = tape.constant(Tensor::from_vec(rows, 2, h.collect()));
        tape.normalize2(h)
    } else {
        let d = tape.sub(goal, pose.translation);
        let d = tape.gather(d, &[0, 1]);
        tape.normalize2(d)
    };
    let orientation = tape.sub(desired, heading);

    let pelvis_xy = tape.gather(positions, &xy_columns([skel.pelvis]));
    let goal_xy = tape.gather(goal, &[0, 1]);
    let pelvis = tape.sub(goal_xy, pelvis_xy);
    let pelvis = tape.saturate2(pelvis);

    let yaw = tape.yaw(pose.root);
    let wrist = tape.rot_z(wrist, yaw, 3, -1.0);
    let planar = tape.concat(&[orientation, pelvis]);
    let planar = tape.rot_z(planar, yaw, 2, -1.0);

    let height = tape.gather(pose.translation, &[2]);
    let canon = tape.rot_z(pose.root, yaw, 3, -1.0);
    Ok(tape.concat(&[height, canon, pose.joints, prev_delta, wrist, planar]))
}
