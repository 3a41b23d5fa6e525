//! Goal-reaching benchmark: goal grid, metrics, sweeps and reports.

pub mod benchmark;
pub mod grid;
pub mod metrics;
pub mod report;

pub use benchmark::{run_benchmark, run_sweep, Bucket, EvalConfig, EvalReport, RolloutResult};
pub use grid::{build_goal_grid, build_goal_grid_with, initial_poses_from, linspace, standing_starts, GoalGrid, GridAxes, GridGoal};
pub use metrics::{distance_to_goal, foot_skate, is_success, SKATE_THRESHOLD, SUCCESS_RADIUS};
pub use report::{aggregates_csv, bar_chart_svg, emit_report, parse_rollouts_csv, rollouts_csv, RolloutRow, ROLLOUT_HEADER};
