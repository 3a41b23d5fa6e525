//! Poses, yaw-canonicalized pose deltas and forward kinematics.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{matrix_to_sixd, rot_z, rotate_z, RotationSixD};
use super::skeleton::Skeleton;
use crate::error::{Error, Result};

/// One frame of motion: root translation, root orientation and one local
/// rotation per skeleton joint, all rotations in 6D form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub root_orientation: RotationSixD,
    pub joint_rotations: Vec<RotationSixD>,
}

/// Frame-to-frame difference with the previous frame's yaw removed from the
/// translation and root-orientation parts. Rotation parts are element-wise
/// differences of 6D encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDelta {
    pub translation: Vector3<f64>,
    pub orientation: [f64; 6],
    pub joint_rotations: Vec<[f64; 6]>,
}

/// World positions of every joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions(pub Vec<Vector3<f64>>);

impl JointPositions {
    pub fn get(&self, joint: usize) -> Vector3<f64> {
        self.0[joint]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| p.iter().copied()).collect()
    }
}

impl Pose {
    /// Rest pose: identity rotations, pelvis at `height` above the origin.
    pub fn rest(skeleton: &Skeleton, height: f64) -> Self {
        Self {
            translation: Vector3::new(0.0, 0.0, height),
            root_orientation: RotationSixD::identity(),
            joint_rotations: vec![RotationSixD::identity(); skeleton.joint_count()],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_rotations.len()
    }

    /// Flattened `[t(3), r(6), θ(6J)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(9 + 6 * self.joint_count());
        v.extend(self.translation.iter());
        v.extend(self.root_orientation.to_array());
        for r in &self.joint_rotations {
            v.extend(r.to_array());
        }
        v
    }

    pub fn from_slice(v: &[f64], joints: usize) -> Result<Self> {
        check_len("pose vector", 9 + 6 * joints, v.len())?;
        Ok(Self {
            translation: Vector3::new(v[0], v[1], v[2]),
            root_orientation: RotationSixD::from_slice(&v[3..9]),
            joint_rotations: v[9..].chunks_exact(6).map(RotationSixD::from_slice).collect(),
        })
    }

    /// Rigid rotation about the world z axis through the origin.
    pub fn rotated_z(&self, angle: f64) -> Self {
        Self {
            translation: rotate_z(&self.translation, angle),
            root_orientation: self.root_orientation.rotated_z(angle),
            joint_rotations: self.joint_rotations.clone(),
        }
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            translation: self.translation + offset,
            ..self.clone()
        }
    }

    /// Re-encodes every rotation as the first two columns of its decoded
    /// matrix, so all 6D entries are orthonormal.
    pub fn orthonormalized(&self) -> Result<Self> {
        let fix = |r: &RotationSixD| matrix_to_sixd(&r.to_matrix()?);
        Ok(Self {
            translation: self.translation,
            root_orientation: fix(&self.root_orientation)?,
            joint_rotations: self.joint_rotations.iter().map(fix).collect::<Result<_>>()?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.root_orientation.is_finite()
            && self.joint_rotations.iter().all(RotationSixD::is_finite)
    }
}

impl PoseDelta {
    pub fn zero(joints: usize) -> Self {
        Self {
            translation: Vector3::zeros(),
            orientation: [0.0; 6],
            joint_rotations: vec![[0.0; 6]; joints],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_rotations.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(9 + 6 * self.joint_count());
        v.extend(self.translation.iter());
        v.extend(self.orientation);
        for r in &self.joint_rotations {
            v.extend(r);
        }
        v
    }

    pub fn from_slice(v: &[f64], joints: usize) -> Result<Self> {
        check_len("delta vector", 9 + 6 * joints, v.len())?;
        let six = |s: &[f64]| -> [f64; 6] { s.try_into().expect("chunk of six") };
        Ok(Self {
            translation: Vector3::new(v[0], v[1], v[2]),
            orientation: six(&v[3..9]),
            joint_rotations: v[9..].chunks_exact(6).map(six).collect(),
        })
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn sub6(a: &RotationSixD, b: &RotationSixD) -> [f64; 6] {
    let (a, b) = (a.to_array(), b.to_array());
    std::array::from_fn(|k| a[k] - b[k])
}

/// Canonicalized difference between consecutive poses.
pub fn pose_delta(prev: &Pose, next: &Pose) -> Result<PoseDelta> {
    check_len("joint rotations", prev.joint_count(), next.joint_count())?;
    let yaw = prev.root_orientation.yaw();
    let translation = rotate_z(&(next.translation - prev.translation), -yaw);
    let orientation = sub6(
        &next.root_orientation.rotated_z(-yaw),
        &prev.root_orientation.rotated_z(-yaw),
    );
    let joint_rotations = next
        .joint_rotations
        .iter()
        .zip(&prev.joint_rotations)
        .map(|(n, p)| sub6(n, p))
        .collect();
    Ok(PoseDelta {
        translation,
        orientation,
        joint_rotations,
    })
}

/// Inverse of [`pose_delta`]: re-applies the previous yaw and adds.
pub fn integrate_delta(prev: &Pose, delta: &PoseDelta) -> Result<Pose> {
    check_len("joint rotations", prev.joint_count(), delta.joint_count())?;
    let yaw = prev.root_orientation.yaw();
    let translation = prev.translation + rotate_z(&delta.translation, yaw);
    let canon = prev.root_orientation.rotated_z(-yaw).to_array();
    let next_canon: [f64; 6] = std::array::from_fn(|k| canon[k] + delta.orientation[k]);
    let root_orientation = RotationSixD::from_array(next_canon).rotated_z(yaw);
    let joint_rotations = prev
        .joint_rotations
        .iter()
        .zip(&delta.joint_rotations)
        .map(|(r, d)| {
            let r = r.to_array();
            RotationSixD::from_array(std::array::from_fn(|k| r[k] + d[k]))
        })
        .collect();
    Ok(Pose {
        translation,
        root_orientation,
        joint_rotations,
    })
}

/// World rotation of every joint together with its position.
pub fn forward_kinematics_full(
    pose: &Pose,
    skeleton: &Skeleton,
) -> Result<(JointPositions, Vec<Matrix3<f64>>)> {
    check_len("joint rotations", skeleton.joint_count(), pose.joint_count())?;
    let n = skeleton.joint_count();
    let root = pose.root_orientation.to_matrix()?;
    let mut world: Vec<Matrix3<f64>> = Vec::with_capacity(n);
    let mut pos: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let local = pose.joint_rotations[j].to_matrix()?;
        match skeleton.parent(j) {
            None => {
                pos.push(pose.translation);
                world.push(root * local);
            }
            Some(p) => {
                pos.push(pos[p] + world[p] * skeleton.offset(j));
                world.push(world[p] * local);
            }
        }
    }
    Ok((JointPositions(pos), world))
}

/// `position(root) = translation`, `position(j) = position(parent) + R_world(parent)·offset(j)`.
pub fn forward_kinematics(pose: &Pose, skeleton: &Skeleton) -> Result<JointPositions> {
    forward_kinematics_full(pose, skeleton).map(|(p, _)| p)
}

/// Ground-plane heading of the skeleton's forward axis, unit length, or zero
/// when the axis is (nearly) vertical.
pub fn heading_of(pose: &Pose, skeleton: &Skeleton) -> Result<Vector2<f64>> {
    let f = pose.root_orientation.to_matrix()? * skeleton.forward();
    Ok(normalize_xy(&Vector2::new(f.x, f.y)))
}

pub(crate) fn normalize_xy(v: &Vector2<f64>) -> Vector2<f64> {
    let n = v.norm();
    if n < 1e-8 {
        Vector2::zeros()
    } else {
        v / n
    }
}

/// Rotation matrix about z, exposed for callers building world frames.
pub fn yaw_matrix(angle: f64) -> Matrix3<f64> {
    rot_z(angle)
}
