//! Cylindrical goal grid around the initial body.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body::Pose;
use crate::dataset::MotionSequence;
use crate::intention::GoalSpec;

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The three axes of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub angles: Vec<f64>,
    pub heights: Vec<f64>,
    pub distances: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            angles: (0..5).map(|k| k as f64 * TAU / 5.0).collect(),
            heights: linspace(0.0, 1.8, 5),
            distances: linspace(0.5, 5.0, 5),
        }
    }
}

impl GridAxes {
    /// 3 × 3 × 3 grid with distances up to 2 m.
    pub fn reduced() -> Self {
        Self {
            angles: (0..3).map(|k| k as f64 * TAU / 3.0).collect(),
            heights: vec![0.45, 0.9, 1.35],
            distances: linspace(0.5, 2.0, 3),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len() * self.heights.len() * self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGoal {
    pub angle: usize,
    pub height: usize,
    pub distance: usize,
    pub goal: GoalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalGrid {
    pub axes: GridAxes,
    pub goals: Vec<GridGoal>,
}

/// Goals at `center_xy + d·(cos θ, sin θ)`, height `h`, in angle-major
/// order, all due at `target_frame`.
pub fn build_goal_grid_with(center: &Pose, axes: &GridAxes, target_frame: usize) -> GoalGrid {
    let c = center.translation;
    let mut goals = Vec::with_capacity(axes.len());
    for (ai, theta) in axes.angles.iter().enumerate() {
        for (hi, h) in axes.heights.iter().enumerate() {
            for (di, d) in axes.distances.iter().enumerate() {
                let position = Vector3::new(c.x + d * theta.cos(), c.y + d * theta.sin(), *h);
                goals.push(GridGoal {
                    angle: ai,
                    height: hi,
                    distance: di,
                    goal: GoalSpec::new(position, target_frame),
                });
            }
        }
    }
    GoalGrid {
        axes: axes.clone(),
        goals,
    }
}

/// The 5 × 5 × 5 benchmark grid with goals due at frame 240.
pub fn build_goal_grid(center: &Pose) -> GoalGrid {
    build_goal_grid_with(center, &GridAxes::default(), 240)
}

/// First frames of the first `n` sequences, moved to the origin in xy.
pub fn initial_poses_from(sequences: &[MotionSequence], n: usize) -> Vec<Pose> {
    sequences
        .iter()
        .take(n)
        .map(|s| {
            let mut p = s.poses[0].clone();
            p.translation.x = 0.0;
            p.translation.y = 0.0;
            p
        })
        .collect()
}

/// Standing start poses taken from the first frame of `n` synthetic
/// reaching clips, moved to the origin.
pub fn standing_starts(skeleton: &crate::body::Skeleton, n: usize, seed: u64) -> crate::error::Result<Vec<Pose>> {
    let cfg = crate::dataset::SyntheticGenConfig {
        locomotion: 0,
        reaching: n,
        floating: 0,
        seed,
        ..crate::dataset::SyntheticGenConfig::default()
    };
    Ok(initial_poses_from(&crate::dataset::generate_synthetic_corpus(&cfg, skeleton)?, n))
}
