//! Skeleton, rotations, forward kinematics and the delta-pose representation.

pub mod diff;
pub mod pose;
pub mod rotation;
pub mod skeleton;

pub use pose::{
    forward_kinematics, forward_kinematics_full, heading_of, integrate_delta, pose_delta,
    JointPositions, Pose, PoseDelta,
};
pub use rotation::{matrix_to_sixd, sixd_to_matrix, yaw_of, RotationSixD};
pub use skeleton::{JointDef, Skeleton, SkeletonDef};
