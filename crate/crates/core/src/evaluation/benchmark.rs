//! Grid sweep: one rollout per (pose, goal, sample), reduced in index order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{build_goal_grid_with, GridAxes};
use super::metrics::{distance_to_goal, foot_skate, SKATE_THRESHOLD, SUCCESS_RADIUS};
use crate::body::{Pose, Skeleton};
use crate::cvae::Model;
use crate::dataset::MotionSequence;
use crate::error::{Error, Result};
use crate::intention::GoalSpec;
use crate::rollout::{generate, GoalSchedule, SampleMode};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub samples: usize,
    /// Generated frames per rollout; goals are due at the last one.
    pub duration: usize,
    pub success_radius: f64,
    pub skate_threshold: f64,
    pub mode: SampleMode,
    pub axes: GridAxes,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 5,
            duration: 240,
            success_radius: SUCCESS_RADIUS,
            skate_threshold: SKATE_THRESHOLD,
            mode: SampleMode::sample(),
            axes: GridAxes::default(),
        }
    }
}

impl EvalConfig {
    pub fn rollouts(&self, poses: usize) -> usize {
        self.axes.len() * poses * self.samples
    }
}

/// Outcome of one rollout. Failed rollouts carry the error and count as
/// misses; they are left out of the DTG and FS means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub pose: usize,
    pub angle: f64,
    pub height: f64,
    pub distance: f64,
    pub angle_index: usize,
    pub height_index: usize,
    pub distance_index: usize,
    pub sample: usize,
    pub dtg: f64,
    pub success: bool,
    pub fs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub value: f64,
    pub count: usize,
    pub successes: usize,
}

impl Bucket {
    pub fn rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.successes as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<RolloutResult>,
    pub sr: f64,
    pub fs: f64,
    /// Mean of per-rollout minimum distances, in centimeters.
    pub dtg_cm: f64,
    pub failed: usize,
    pub by_angle: Vec<Bucket>,
    pub by_height: Vec<Bucket>,
    pub by_distance: Vec<Bucket>,
}

fn buckets(values: &[f64], rows: &[RolloutResult], key: impl Fn(&RolloutResult) -> usize) -> Vec<Bucket> {
    let mut out: Vec<Bucket> = values
        .iter()
        .map(|v| Bucket {
            value: *v,
            count: 0,
            successes: 0,
        })
        .collect();
    for r in rows {
        let b = &mut out[key(r)];
        b.count += 1;
        b.successes += usize::from(r.success);
    }
    out
}

impl EvalReport {
    pub fn from_rows(rows: Vec<RolloutResult>, axes: &GridAxes) -> Self {
        let n = rows.len();
        let ok: Vec<&RolloutResult> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mean = |f: &dyn Fn(&RolloutResult) -> f64| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        let sr = if n == 0 {
            0.0
        } else {
            rows.iter().filter(|r| r.success).count() as f64 / n as f64
        };
        Self {
            sr,
            fs: mean(&|r| r.fs),
            dtg_cm: mean(&|r| 100.0 * r.dtg),
            failed: n - ok.len(),
            by_angle: buckets(&axes.angles, &rows, |r| r.angle_index),
            by_height: buckets(&axes.heights, &rows, |r| r.height_index),
            by_distance: buckets(&axes.distances, &rows, |r| r.distance_index),
            rows,
        }
    }
}

struct Job {
    pose: usize,
    sample: usize,
    angle: usize,
    height: usize,
    distance: usize,
    goal: GoalSpec,
    seed: u64,
}

/// Sweeps the grid with an arbitrary generator
/// `(initial pose, goal, duration, seed) -> sequence`.
pub fn run_sweep<G>(
    cfg: &EvalConfig,
    poses: &[Pose],
    skeleton: &Skeleton,
    seed: u64,
    workers: usize,
    generator: G,
) -> Result<EvalReport>
where
    G: Fn(&Pose, &GoalSpec, usize, u64) -> Result<MotionSequence> + Sync,
{
    if poses.is_empty() || cfg.samples == 0 || cfg.duration == 0 {
        return Err(Error::InvalidConfig("evaluation needs poses, samples and a duration".into()));
    }
    let mut jobs = Vec::with_capacity(cfg.rollouts(poses.len()));
    for (p, pose) in poses.iter().enumerate() {
        let grid = build_goal_grid_with(pose, &cfg.axes, cfg.duration);
        for (g, gg) in grid.goals.iter().enumerate() {
            for s in 0..cfg.samples {
                jobs.push(Job {
                    pose: p,
                    sample: s,
                    angle: gg.angle,
                    height: gg.height,
                    distance: gg.distance,
                    goal: gg.goal.clone(),
                    seed: derive_seed(seed, &[p as u64, g as u64, s as u64]),
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let axes = &cfg.axes;
    let rows: Vec<RolloutResult> = pool.install(|| {
        jobs.par_iter()
            .map(|j| {
                let mut row = RolloutResult {
                    pose: j.pose,
                    angle: axes.angles[j.angle],
                    height: axes.heights[j.height],
                    distance: axes.distances[j.distance],
                    angle_index: j.angle,
                    height_index: j.height,
                    distance_index: j.distance,
                    sample: j.sample,
                    dtg: f64::NAN,
                    success: false,
                    fs: f64::NAN,
                    error: None,
                };
                let measured = generator(&poses[j.pose], &j.goal, cfg.duration, j.seed).and_then(|seq| {
                    Ok((distance_to_goal(&seq, &j.goal, skeleton)?, foot_skate(&seq, skeleton, cfg.skate_threshold)?))
                });
                match measured {
                    Ok((dtg, fs)) => {
                        row.dtg = dtg;
                        row.fs = fs;
                        row.success = dtg <= cfg.success_radius;
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            })
            .collect()
    });
    Ok(EvalReport::from_rows(rows, axes))
}

/// The benchmark with the model as generator.
pub fn run_benchmark(model: &Model, cfg: &EvalConfig, poses: &[Pose], seed: u64, workers: usize) -> Result<EvalReport> {
    run_sweep(cfg, poses, &model.skeleton, seed, workers, |pose, goal, duration, s| {
        generate(pose, &GoalSchedule::single(goal.clone()), duration, model, s, cfg.mode).map(|r| r.sequence)
    })
}
