use nalgebra::Vector3;
use proptest::prelude::*;
use reachgen::body::{forward_kinematics, Pose, Skeleton};
use reachgen::dataset::{MotionSequence, Provenance};
use reachgen::evaluation::{
    aggregates_csv, build_goal_grid, distance_to_goal, emit_report, foot_skate, is_success, parse_rollouts_csv,
    rollouts_csv, run_sweep, standing_starts, EvalConfig, GridAxes, SKATE_THRESHOLD, SUCCESS_RADIUS,
};
use reachgen::intention::GoalSpec;
use reachgen::Error;

fn skel() -> Skeleton {
    Skeleton::desk()
}

/// Rest poses slid along x by the given offsets.
fn slide(xs: &[f64]) -> MotionSequence {
    let s = skel();
    let poses = xs.iter().map(|&x| Pose::rest(&s, 0.9).translated(Vector3::new(x, 0.0, 0.0))).collect();
    MotionSequence::new("hand", 30.0, poses, Provenance::Generated)
}

fn rest_wrist() -> Vector3<f64> {
    let s = skel();
    forward_kinematics(&Pose::rest(&s, 0.9), &s).unwrap().get(s.right_wrist())
}

#[test]
fn full_grid_counts() {
    let s = skel();
    let grid = build_goal_grid(&Pose::rest(&s, 0.9));
    assert_eq!(grid.goals.len(), 125);
    assert!(grid.goals.iter().all(|g| g.goal.target_frame == 240));
    let cfg = EvalConfig::default();
    assert_eq!(cfg.rollouts(6), 3750);
    assert_eq!(GridAxes::reduced().len(), 27);
}

#[test]
fn grid_geometry() {
    let s = skel();
    let centre = Pose::rest(&s, 0.9).translated(Vector3::new(1.0, -2.0, 0.0));
    let grid = build_goal_grid(&centre);
    let first = &grid.goals[0];
    assert_eq!((first.angle, first.height, first.distance), (0, 0, 0));
    assert!((first.goal.position - Vector3::new(1.5, -2.0, 0.0)).norm() < 1e-12);
    let last = grid.goals.last().unwrap();
    assert_eq!((last.angle, last.height, last.distance), (4, 4, 4));
    let p = last.goal.position;
    assert!((p.z - 1.8).abs() < 1e-12);
    assert!(((p.x - 1.0).hypot(p.y + 2.0) - 5.0).abs() < 1e-12);
}

#[test]
fn min_distance_rule() {
    // wrist passes the goal at frame 2, then moves away again
    let g = GoalSpec::new(rest_wrist() + Vector3::new(0.25, 0.0, 0.0), 3);
    let seq = slide(&[0.0, 0.125, 0.25, 0.5]);
    assert!(distance_to_goal(&seq, &g, &skel()).unwrap() < 1e-12);
    let g = GoalSpec::new(rest_wrist() + Vector3::new(0.75, 0.0, 0.0), 3);
    assert!((distance_to_goal(&seq, &g, &skel()).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn ten_centimetre_rule() {
    let s = skel();
    let seq = slide(&[0.0, 0.0, 0.0]);
    let at = |dx: f64| GoalSpec::new(rest_wrist() + Vector3::new(0.0, dx, 0.0), 2);
    assert!(is_success(&seq, &at(0.0625), &s, SUCCESS_RADIUS).unwrap());
    assert!(is_success(&seq, &at(0.0999), &s, SUCCESS_RADIUS).unwrap());
    assert!(!is_success(&seq, &at(0.1001), &s, SUCCESS_RADIUS).unwrap());
    assert!(!is_success(&seq, &at(0.5), &s, SUCCESS_RADIUS).unwrap());
}

#[test]
fn skating_rule() {
    let s = skel();
    // transitions of 0.5 cm, 1.5 cm, 0.1 cm: only the middle one skates
    let seq = slide(&[0.0, 0.005, 0.02, 0.021]);
    assert!((foot_skate(&seq, &s, SKATE_THRESHOLD).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    // 0.5, 0.7, 0.6 cm: only 0.7 is above 0.66
    let seq = slide(&[0.0, 0.005, 0.012, 0.018]);
    assert_eq!(foot_skate(&seq, &s, SKATE_THRESHOLD).unwrap(), 1.0 / 3.0);
    assert_eq!(foot_skate(&slide(&[0.0, 0.0, 0.0]), &s, SKATE_THRESHOLD).unwrap(), 0.0);
    assert_eq!(foot_skate(&slide(&[0.0, 0.01, 0.02, 0.03]), &s, SKATE_THRESHOLD).unwrap(), 1.0);
    assert!(foot_skate(&slide(&[0.0]), &s, SKATE_THRESHOLD).is_err());
}

fn one_goal_cfg(samples: usize) -> EvalConfig {
    EvalConfig {
        samples,
        duration: 3,
        axes: GridAxes {
            angles: vec![0.0],
            heights: vec![1.0],
            distances: vec![1.0, 2.0],
        },
        ..EvalConfig::default()
    }
}

/// Teleports the whole body so the wrist lands on the goal at the last
/// frame; goals farther than `reach` are left alone.
fn teleporter(reach: f64) -> impl Fn(&Pose, &GoalSpec, usize, u64) -> reachgen::Result<MotionSequence> + Sync {
    move |pose, goal, duration, _| {
        let s = skel();
        let w = forward_kinematics(pose, &s)?.get(s.right_wrist());
        let jump = goal.position - w;
        let mut poses = vec![pose.clone(); duration + 1];
        if jump.norm() < reach {
            poses[duration] = pose.translated(jump);
        }
        Ok(MotionSequence::new("tp", 30.0, poses, Provenance::Generated))
    }
}

#[test]
fn teleport_sweep_aggregates() {
    let s = skel();
    let poses = vec![Pose::rest(&s, 0.9)];
    let w = rest_wrist();
    let cfg = one_goal_cfg(2);
    let report = run_sweep(&cfg, &poses, &s, 0, 1, teleporter(1.6)).unwrap();
    assert_eq!(report.rows.len(), 4);
    // near goals are hit exactly, far ones keep their initial distance
    let far = (Vector3::new(2.0, 0.0, 1.0) - w).norm();
    let near = report.rows.iter().filter(|r| r.distance == 1.0).collect::<Vec<_>>();
    assert!(near.iter().all(|r| r.success && r.dtg < 1e-12));
    assert_eq!(report.sr, 0.5);
    assert!((report.dtg_cm - 100.0 * far / 2.0).abs() < 1e-9);
    // only the teleport frame moves the feet, one transition in three
    assert!((report.fs - (1.0 / 3.0) / 2.0).abs() < 1e-12);
    assert_eq!(report.by_distance[0].rate(), 1.0);
    assert_eq!(report.by_distance[1].rate(), 0.0);
    assert_eq!(report.failed, 0);
}

#[test]
fn failed_rollouts_are_misses_outside_the_means() {
    let s = skel();
    let poses = vec![Pose::rest(&s, 0.9)];
    let cfg = one_goal_cfg(1);
    let tp = teleporter(10.0);
    let report = run_sweep(&cfg, &poses, &s, 0, 1, |p: &Pose, g: &GoalSpec, d, seed| {
        if g.position.x > 1.5 {
            Err(Error::NumericFault {
                context: "test".into(),
                layer: None,
            })
        } else {
            tp(p, g, d, seed)
        }
    })
    .unwrap();
    assert_eq!(report.failed, 1);
    assert_eq!(report.sr, 0.5);
    assert!(report.dtg_cm.abs() < 1e-9);
    let csv = rollouts_csv(&report);
    let rows = parse_rollouts_csv(&csv).unwrap();
    assert_eq!(rows[1].dtg_cm, None);
    assert!(!rows[1].success);
}

#[test]
fn sweep_is_worker_independent() {
    let s = skel();
    let poses = standing_starts(&s, 2, 3).unwrap();
    let cfg = one_goal_cfg(3);
    let noisy = |p: &Pose, g: &GoalSpec, d: usize, seed: u64| {
        let jitter = (seed % 1000) as f64 * 1e-4;
        teleporter(1.5)(&p.translated(Vector3::new(jitter, 0.0, 0.0)), g, d, seed)
    };
    let a = run_sweep(&cfg, &poses, &s, 9, 1, noisy).unwrap();
    let b = run_sweep(&cfg, &poses, &s, 9, 4, noisy).unwrap();
    assert_eq!(rollouts_csv(&a), rollouts_csv(&b));
    assert_eq!(aggregates_csv(&a), aggregates_csv(&b));
}

#[test]
fn golden_rollout_csv() {
    let s = skel();
    let cfg = one_goal_cfg(1);
    let report = run_sweep(&cfg, &[Pose::rest(&s, 0.9)], &s, 0, 1, teleporter(1.6)).unwrap();
    let w = rest_wrist();
    let far = 100.0 * (Vector3::new(2.0, 0.0, 1.0) - w).norm();
    let expected = format!(
        "# fs: lowest joint of frame i moving more than the threshold (3D) from i to i+1\n\
         # success: dtg <= radius (inclusive); failed rollouts have empty metrics\n\
         pose_id,angle,height,distance,sample,dtg_cm,success,fs\n\
         0,0,1,1,0,{},1,{}\n\
         0,0,1,2,0,{far},0,0\n",
        100.0 * report.rows[0].dtg,
        1.0 / 3.0
    );
    assert_eq!(rollouts_csv(&report), expected);
}

#[test]
fn report_files() {
    let s = skel();
    let report = run_sweep(&one_goal_cfg(2), &[Pose::rest(&s, 0.9)], &s, 0, 1, teleporter(1.6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&report, dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["rollouts.csv", "aggregates.csv", "sr_by_angle.svg", "sr_by_height.svg", "sr_by_distance.svg"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
    let svg = std::fs::read_to_string(dir.path().join("sr_by_distance.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let agg = std::fs::read_to_string(dir.path().join("aggregates.csv")).unwrap();
    assert!(agg.contains("rollouts,4\n") && agg.contains("sr,0.5\n"));
}

#[test]
fn standing_starts_are_centred() {
    let s = skel();
    let a = standing_starts(&s, 3, 1).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, standing_starts(&s, 3, 1).unwrap());
    for p in &a {
        assert!(p.translation.x.abs() < 1e-12 && p.translation.y.abs() < 1e-12);
        assert!(p.translation.z > 0.5);
    }
}

proptest! {
    #[test]
    fn csv_reparses(dtgs in prop::collection::vec(0.0f64..3.0, 1..6), fs in 0.0f64..1.0) {
        let s = skel();
        let axes = GridAxes { angles: vec![0.0], heights: vec![1.0], distances: vec![1.0] };
        let cfg = EvalConfig { samples: dtgs.len(), duration: 1, axes, ..EvalConfig::default() };
        let report = run_sweep(&cfg, &[Pose::rest(&s, 0.9)], &s, 0, 1, |p: &Pose, _: &GoalSpec, d: usize, _| {
            Ok(MotionSequence::new("x", 30.0, vec![p.clone(); d + 1], Provenance::Generated))
        }).unwrap();
        let mut report = report;
        for (r, d) in report.rows.iter_mut().zip(&dtgs) {
            r.dtg = *d;
            r.success = *d <= SUCCESS_RADIUS;
            r.fs = fs;
        }
        let rows = parse_rollouts_csv(&rollouts_csv(&report)).unwrap();
        prop_assert_eq!(rows.len(), dtgs.len());
        for (row, d) in rows.iter().zip(&dtgs) {
            prop_assert_eq!(row.dtg_cm, Some(100.0 * d));
            prop_assert_eq!(row.fs, Some(fs));
            prop_assert_eq!(row.success, *d <= SUCCESS_RADIUS);
        }
    }
}
