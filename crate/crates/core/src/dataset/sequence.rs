use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, JointPositions, Pose, Skeleton};
use crate::error::{Error, Result};
use crate::intention::GoalSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Locomotion,
    Reaching,
    Generated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Locomotion => "locomotion",
            Provenance::Reaching => "reaching",
            Provenance::Generated => "generated",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Provenance::Locomotion => 0,
            Provenance::Reaching => 1,
            Provenance::Generated => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Provenance::Locomotion),
            1 => Some(Provenance::Reaching),
            2 => Some(Provenance::Generated),
            _ => None,
        }
    }
}

/// Ordered poses sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub id: String,
    pub fps: f64,
    pub poses: Vec<Pose>,
    pub label: Option<GoalSpec>,
    pub provenance: Provenance,
}

impl MotionSequence {
    pub fn new(id: impl Into<String>, fps: f64, poses: Vec<Pose>, provenance: Provenance) -> Self {
        Self {
            id: id.into(),
            fps,
            poses,
            label: None,
            provenance,
        }
    }

    pub fn with_label(mut self, label: GoalSpec) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 / self.fps
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("{}: fps must be positive", self.id)));
        }
        if self.poses.len() < 2 {
            return Err(Error::InvalidConfig(format!("{}: fewer than two frames", self.id)));
        }
        for pose in &self.poses {
            if pose.joint_count() != skeleton.joint_count() {
                return Err(Error::DimensionMismatch {
                    what: "joint rotations",
                    expected: skeleton.joint_count(),
                    got: pose.joint_count(),
                });
            }
        }
        if let Some(label) = &self.label {
            if label.target_frame >= self.poses.len() {
                return Err(Error::InvalidConfig(format!(
                    "{}: label frame {} outside {} frames",
                    self.id,
                    label.target_frame,
                    self.poses.len()
                )));
            }
        }
        Ok(())
    }

    pub fn joint_positions(&self, skeleton: &Skeleton) -> Result<Vec<JointPositions>> {
        self.poses.iter().map(|p| forward_kinematics(p, skeleton)).collect()
    }
}
