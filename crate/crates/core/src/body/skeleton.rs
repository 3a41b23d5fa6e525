//! Kinematic tree definition and its text file format.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PELVIS: &str = "pelvis";
pub const RIGHT_WRIST: &str = "right_wrist";
pub const LEFT_FOOT: &str = "left_foot";
pub const RIGHT_FOOT: &str = "right_foot";

/// One entry of a skeleton definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub offset: [f64; 3],
}

/// On-disk form of a skeleton (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDef {
    pub forward: [f64; 3],
    pub joints: Vec<JointDef>,
}

/// A validated kinematic tree. Joint 0 is the root (pelvis) and every
/// parent index is smaller than its child's index.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vector3<f64>>,
    forward: Vector3<f64>,
    pelvis: usize,
    right_wrist: usize,
    left_foot: usize,
    right_foot: usize,
}

impl Skeleton {
    pub fn from_def(def: &SkeletonDef) -> Result<Self> {
        let invalid = |msg: String| Error::InvalidSkeleton(msg);
        if def.joints.is_empty() {
            return Err(invalid("no joints".into()));
        }
        let forward = Vector3::from(def.forward);
        if !forward.iter().all(|v| v.is_finite()) || (forward.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("forward axis {:?} is not unit-norm", def.forward)));
        }
        let mut names: Vec<String> = Vec::with_capacity(def.joints.len());
        let mut parents = Vec::with_capacity(def.joints.len());
        let mut offsets = Vec::with_capacity(def.joints.len());
        for (i, joint) in def.joints.iter().enumerate() {
            if names.iter().any(|n| n == &joint.name) {
                return Err(invalid(format!("duplicate joint name {}", joint.name)));
            }
            let parent = match (&joint.parent, i) {
                (None, 0) => None,
                (None, _) => return Err(invalid(format!("joint {} has no parent", joint.name))),
                (Some(p), 0) => {
                    return Err(invalid(format!("root joint {} has parent {p}", joint.name)))
                }
                (Some(p), _) => Some(names.iter().position(|n| n == p).ok_or_else(|| {
                    invalid(format!(
                        "parent {p} of {} must be defined before it",
                        joint.name
                    ))
                })?),
            };
            if !joint.offset.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("non-finite offset for {}", joint.name)));
            }
            names.push(joint.name.clone());
            parents.push(parent);
            offsets.push(Vector3::from(joint.offset));
        }
        let find = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| invalid(format!("missing required joint {name}")))
        };
        let pelvis = find(PELVIS)?;
        if pelvis != 0 {
            return Err(invalid("pelvis must be the root joint".into()));
        }
        let right_wrist = find(RIGHT_WRIST)?;
        let left_foot = find(LEFT_FOOT)?;
        let right_foot = find(RIGHT_FOOT)?;
        Ok(Self {
            names,
            parents,
            offsets,
            forward,
            pelvis,
            right_wrist,
            left_foot,
            right_foot,
        })
    }

    pub fn to_def(&self) -> SkeletonDef {
        SkeletonDef {
            forward: self.forward.into(),
            joints: (0..self.joint_count())
                .map(|j| JointDef {
                    name: self.names[j].clone(),
                    parent: self.parents[j].map(|p| self.names[p].clone()),
                    offset: self.offsets[j].into(),
                })
                .collect(),
        }
    }

    /// The default 15-joint desk skeleton: pelvis, spine, head, both arms
    /// (shoulder, elbow, wrist) and both legs (hip, knee, foot). +x is the
    /// body's right, +y forward, +z up. Standing pelvis height is 0.93 m.
    pub fn desk() -> Self {
        let j = |name: &str, parent: Option<&str>, offset: [f64; 3]| JointDef {
            name: name.into(),
            parent: parent.map(Into::into),
            offset,
        };
        let def = SkeletonDef {
            forward: [0.0, 1.0, 0.0],
            joints: vec![
                j("pelvis", None, [0.0, 0.0, 0.0]),
                j("spine", Some("pelvis"), [0.0, 0.0, 0.10]),
                j("head", Some("spine"), [0.0, 0.0, 0.55]),
                j("right_shoulder", Some("spine"), [0.18, 0.0, 0.37]),
                j("right_elbow", Some("right_shoulder"), [0.0, 0.0, -0.28]),
                j("right_wrist", Some("right_elbow"), [0.0, 0.0, -0.25]),
                j("left_shoulder", Some("spine"), [-0.18, 0.0, 0.37]),
                j("left_elbow", Some("left_shoulder"), [0.0, 0.0, -0.28]),
                j("left_wrist", Some("left_elbow"), [0.0, 0.0, -0.25]),
                j("right_hip", Some("pelvis"), [0.09, 0.0, -0.05]),
                j("right_knee", Some("right_hip"), [0.0, 0.0, -0.44]),
                j("right_foot", Some("right_knee"), [0.0, 0.0, -0.44]),
                j("left_hip", Some("pelvis"), [-0.09, 0.0, -0.05]),
                j("left_knee", Some("left_hip"), [0.0, 0.0, -0.44]),
                j("left_foot", Some("left_knee"), [0.0, 0.0, -0.44]),
            ],
        };
        Self::from_def(&def).expect("built-in skeleton is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let def: SkeletonDef = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_def(&def)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_def()).expect("skeleton serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offset(&self, joint: usize) -> Vector3<f64> {
        self.offsets[joint]
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.forward
    }

    pub fn pelvis(&self) -> usize {
        self.pelvis
    }

    pub fn right_wrist(&self) -> usize {
        self.right_wrist
    }

    pub fn left_foot(&self) -> usize {
        self.left_foot
    }

    pub fn right_foot(&self) -> usize {
        self.right_foot
    }

    /// Length of a flattened pose or delta vector: `3 + 6 + 6J`.
    pub fn pose_dim(&self) -> usize {
        9 + 6 * self.joint_count()
    }

    /// Short content hash used to tag files and checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.forward.iter() {
            h.update(v.to_le_bytes());
        }
        for j in 0..self.joint_count() {
            h.update(self.names[j].as_bytes());
            h.update([0u8]);
            h.update((self.parents[j].map_or(u64::MAX, |p| p as u64)).to_le_bytes());
            for v in self.offsets[j].iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex16(&h.finalize())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_skeleton_layout() {
        let s = Skeleton::desk();
        assert_eq!(s.joint_count(), 15);
        assert_eq!(s.pelvis(), 0);
        assert_eq!(s.names()[s.right_wrist()], RIGHT_WRIST);
        assert_eq!(s.pose_dim(), 99);
    }

    #[test]
    fn toml_roundtrip_preserves_hash() {
        let s = Skeleton::desk();
        let back = Skeleton::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }

    #[test]
    fn rejects_bad_definitions() {
        let mut def = Skeleton::desk().to_def();
        def.forward = [0.0, 2.0, 0.0];
        assert!(Skeleton::from_def(&def).is_err());

        let mut def = Skeleton::desk().to_def();
        def.joints.retain(|j| j.name != RIGHT_WRIST);
        assert!(Skeleton::from_def(&def).is_err());

        let mut def = Skeleton::desk().to_def();
        def.joints.swap(1, 2);
        assert!(Skeleton::from_def(&def).is_err());
    }

    #[test]
    fn hash_tracks_offsets() {
        let mut def = Skeleton::desk().to_def();
        def.joints[4].offset[2] = -0.29;
        assert_ne!(Skeleton::from_def(&def).unwrap().hash(), Skeleton::desk().hash());
    }
}
