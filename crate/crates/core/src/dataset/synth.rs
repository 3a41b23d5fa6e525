//! Procedural motion corpus: kinematic walking and stand-and-reach clips.
//!
//! The root follows a unicycle controller between waypoints. Feet are
//! placed by an event-driven step planner and stay locked to the ground
//! while in stance; legs and arms are posed by two-bone inverse kinematics.
//! Reaching clips walk to a stance in front of the target, crouch and bend
//! as needed, and put the right wrist exactly on the target at the labeled
//! frame.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequence::{MotionSequence, Provenance};
use crate::body::rotation::{matrix_to_sixd, rot_x, rot_z};
use crate::body::{forward_kinematics, Pose, RotationSixD, Skeleton};
use crate::error::{Error, Result};
use crate::intention::GoalSpec;
use crate::seed::rng_for;

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidConfig(format!("{what}: range {}..{} is not ordered", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    /// Seconds per step (one foot).
    pub step_period: Span,
    /// Top walking speed in m/s.
    pub speed: Span,
    /// Turn-rate limit in rad/s.
    pub turn_rate: Span,
    pub standing_height: f64,
    pub walking_dip: f64,
    pub foot_lift: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            step_period: Span::new(0.45, 0.6),
            speed: Span::new(0.5, 0.9),
            turn_rate: Span::new(1.5, 2.5),
            standing_height: 0.90,
            walking_dip: 0.04,
            foot_lift: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachParams {
    pub height: Span,
    /// Horizontal distance from the start position to the target.
    pub distance: Span,
    pub reach_seconds: Span,
    pub hold_seconds: Span,
    pub max_attempts: usize,
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            height: Span::new(0.3, 1.75),
            distance: Span::new(0.5, 3.0),
            reach_seconds: Span::new(0.8, 1.3),
            hold_seconds: Span::new(0.3, 0.7),
            max_attempts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGenConfig {
    pub locomotion: usize,
    pub reaching: usize,
    /// Walking clips with an airborne stretch, for exercising the float filter.
    pub floating: usize,
    pub fps: f64,
    pub locomotion_seconds: Span,
    pub gait: GaitParams,
    pub reach: ReachParams,
    pub seed: u64,
}

impl Default for SyntheticGenConfig {
    fn default() -> Self {
        Self {
            locomotion: 150,
            reaching: 150,
            floating: 0,
            fps: 30.0,
            locomotion_seconds: Span::new(4.0, 8.0),
            gait: GaitParams::default(),
            reach: ReachParams::default(),
            seed: 0,
        }
    }
}

impl SyntheticGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig("fps must be positive".into()));
        }
        self.locomotion_seconds.check("locomotion_seconds")?;
        self.gait.step_period.check("step_period")?;
        self.gait.speed.check("speed")?;
        self.gait.turn_rate.check("turn_rate")?;
        self.reach.height.check("reach height")?;
        self.reach.distance.check("reach distance")?;
        self.reach.reach_seconds.check("reach_seconds")?;
        self.reach.hold_seconds.check("hold_seconds")?;
        if self.gait.step_period.min <= 0.0 || self.locomotion_seconds.min <= 0.0 {
            return Err(Error::InvalidConfig("durations must be positive".into()));
        }
        Ok(())
    }
}

/// Generates the corpus. Sequence `i` of each category draws from its own
/// derived seed, so the output does not depend on generation order.
pub fn generate_synthetic_corpus(cfg: &SyntheticGenConfig, skeleton: &Skeleton) -> Result<Vec<MotionSequence>> {
    cfg.validate()?;
    let rig = Rig::new(skeleton)?;
    let mut out = Vec::with_capacity(cfg.locomotion + cfg.reaching + cfg.floating);
    for i in 0..cfg.locomotion {
        let mut rng = rng_for(cfg.seed, &[0, i as u64]);
        let poses = locomotion_clip(cfg, &rig, skeleton, &mut rng, false)?;
        out.push(MotionSequence::new(format!("loco-{i:05}"), cfg.fps, poses, Provenance::Locomotion));
    }
    for i in 0..cfg.reaching {
        let (poses, label) = reaching_clip(cfg, &rig, skeleton, i as u64)?;
        out.push(MotionSequence::new(format!("reach-{i:05}"), cfg.fps, poses, Provenance::Reaching).with_label(label));
    }
    for i in 0..cfg.floating {
        let mut rng = rng_for(cfg.seed, &[2, i as u64]);
        let poses = locomotion_clip(cfg, &rig, skeleton, &mut rng, true)?;
        out.push(MotionSequence::new(format!("float-{i:05}"), cfg.fps, poses, Provenance::Locomotion));
    }
    Ok(out)
}

/// Joint indices and bone lengths the generator needs.
#[derive(Debug, Clone)]
struct Rig {
    spine: usize,
    head: usize,
    shoulder: [usize; 2],
    elbow: [usize; 2],
    wrist: [usize; 2],
    hip: [usize; 2],
    knee: [usize; 2],
    foot: [usize; 2],
    offsets: Vec<Vector3<f64>>,
    upper_arm: f64,
    forearm: f64,
    thigh: f64,
    shin: f64,
}

/// Side index 0 is the right side, 1 the left.
const SIDES: [f64; 2] = [1.0, -1.0];

impl Rig {
    fn new(skeleton: &Skeleton) -> Result<Self> {
        let find = |name: &str| {
            skeleton
                .index_of(name)
                .ok_or_else(|| Error::InvalidSkeleton(format!("generator needs joint {name}")))
        };
        let pair = |a: &str, b: &str| -> Result<[usize; 2]> { Ok([find(a)?, find(b)?]) };
        let rig = Self {
            spine: find("spine")?,
            head: find("head")?,
            shoulder: pair("right_shoulder", "left_shoulder")?,
            elbow: pair("right_elbow", "left_elbow")?,
            wrist: pair("right_wrist", "left_wrist")?,
            hip: pair("right_hip", "left_hip")?,
            knee: pair("right_knee", "left_knee")?,
            foot: pair("right_foot", "left_foot")?,
            offsets: skeleton.offsets().to_vec(),
            upper_arm: 0.0,
            forearm: 0.0,
            thigh: 0.0,
            shin: 0.0,
        };
        let o = &rig.offsets;
        Ok(Self {
            upper_arm: o[rig.elbow[0]].norm(),
            forearm: o[rig.wrist[0]].norm(),
            thigh: o[rig.knee[0]].norm(),
            shin: o[rig.foot[0]].norm(),
            ..rig
        })
    }

    /// Shoulder position relative to the pelvis in the body frame.
    fn shoulder_local(&self, side: usize, bend: f64) -> Vector3<f64> {
        self.offsets[self.spine] + rot_x(-bend) * self.offsets[self.shoulder[side]]
    }
}

/// Everything needed to pose one frame.
#[derive(Debug, Clone)]
struct Posture {
    pelvis: Vector3<f64>,
    /// Rotation of the body about world z; the forward axis is `Rz(yaw)·ŷ`.
    yaw: f64,
    bend: f64,
    feet: [Vector3<f64>; 2],
    wrists: [Vector3<f64>; 2],
}

fn arc(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::rotation_between(from, to)
        .unwrap_or_else(|| {
            let axis = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            Rotation3::from_axis_angle(&Unit::new_normalize(from.cross(&axis)), PI)
        })
        .into_inner()
}

/// Middle joint of a two-bone chain from `root` to `target`, bending
/// toward `pole`. Out-of-reach targets straighten the chain.
fn two_bone(root: &Vector3<f64>, target: &Vector3<f64>, l1: f64, l2: f64, pole: &Vector3<f64>) -> Vector3<f64> {
    let to = target - root;
    let d = to.norm().clamp(1e-6, l1 + l2 - 1e-9);
    let u = to / to.norm().max(1e-12);
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let mut n = pole - u * u.dot(pole);
    if n.norm() < 1e-9 {
        n = u.cross(&Vector3::x());
    }
    root + u * a + n.normalize() * h
}

impl Rig {
    fn build(&self, skeleton: &Skeleton, p: &Posture) -> Result<Pose> {
        let n = skeleton.joint_count();
        let mut local = vec![Matrix3::identity(); n];
        let root = rot_z(p.yaw);
        let spine_local = rot_x(-p.bend);
        local[self.spine] = spine_local;
        local[self.head] = rot_x(0.5 * p.bend);
        let spine_world = root * spine_local;
        let spine_pos = p.pelvis + root * self.offsets[self.spine];

        for side in 0..2 {
            // legs: parent of the hip is the pelvis, whose world frame is `root`
            let hip_pos = p.pelvis + root * self.offsets[self.hip[side]];
            let knee_pos = two_bone(&hip_pos, &p.feet[side], self.thigh, self.shin, &(root * Vector3::y()));
            let hip_world = arc(&(root * self.offsets[self.knee[side]]), &(knee_pos - hip_pos)) * root;
            local[self.hip[side]] = root.transpose() * hip_world;
            let knee_world = arc(&(hip_world * self.offsets[self.foot[side]]), &(p.feet[side] - knee_pos)) * hip_world;
            local[self.knee[side]] = hip_world.transpose() * knee_world;

            let sh_pos = spine_pos + spine_world * self.offsets[self.shoulder[side]];
            let pole = root * Vector3::new(SIDES[side], -0.3, -1.0);
            let el_pos = two_bone(&sh_pos, &p.wrists[side], self.upper_arm, self.forearm, &pole);
            let sh_world = arc(&(spine_world * self.offsets[self.elbow[side]]), &(el_pos - sh_pos)) * spine_world;
            local[self.shoulder[side]] = spine_world.transpose() * sh_world;
            let el_world = arc(&(sh_world * self.offsets[self.wrist[side]]), &(p.wrists[side] - el_pos)) * sh_world;
            local[self.elbow[side]] = sh_world.transpose() * el_world;
        }
        Ok(Pose {
            translation: p.pelvis,
            root_orientation: matrix_to_sixd(&root)?,
            joint_rotations: local.iter().map(matrix_to_sixd).collect::<Result<Vec<RotationSixD>>>()?,
        })
    }

    /// Relaxed wrist position with a walking swing of `swing` meters.
    fn hanging_wrist(&self, p: &Posture, side: usize, swing: f64) -> Vector3<f64> {
        let root = rot_z(p.yaw);
        let sh = p.pelvis + root * self.shoulder_local(side, p.bend);
        let reach = 0.96 * (self.upper_arm + self.forearm);
        sh + root * Vector3::new(0.03 * SIDES[side], 0.08 + swing, -(reach * reach - 0.0073).sqrt())
    }
}

/// Root path sampled at the frame rate.
#[derive(Debug, Clone, Default)]
struct Track {
    pos: Vec<Vector2<f64>>,
    /// Heading angle of the forward axis in the ground plane.
    heading: Vec<f64>,
    speed: Vec<f64>,
}

impl Track {
    fn len(&self) -> usize {
        self.pos.len()
    }

    fn at(&self, i: usize) -> (Vector2<f64>, f64, f64) {
        let i = i.min(self.len() - 1);
        (self.pos[i], self.heading[i], self.speed[i])
    }

    fn push(&mut self, pos: Vector2<f64>, heading: f64, speed: f64) {
        self.pos.push(pos);
        self.heading.push(heading);
        self.speed.push(speed);
    }

    fn hold(&mut self, frames: usize) {
        let (p, h, _) = self.at(self.len() - 1);
        for _ in 0..frames {
            self.push(p, h, 0.0);
        }
    }
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

fn dir(angle: f64) -> Vector2<f64> {
    Vector2::new(angle.cos(), angle.sin())
}

/// Body yaw for a ground-plane heading, given the +y forward axis.
fn yaw_for(heading: f64) -> f64 {
    heading - PI / 2.0
}

struct Drive {
    dt: f64,
    max_speed: f64,
    max_turn: f64,
}

impl Drive {
    /// Walks through `waypoints`, then turns in place to `facing` if given.
    /// Stops after `max_frames` frames in total.
    fn run(&self, track: &mut Track, waypoints: &[Vector2<f64>], facing: Option<f64>, max_frames: usize) -> bool {
        let (mut p, mut h, mut v) = track.at(track.len() - 1);
        let accel = 1.2;
        for (w, target) in waypoints.iter().enumerate() {
            let last = w + 1 == waypoints.len();
            loop {
                if track.len() >= max_frames {
                    return false;
                }
                let to = target - p;
                let dist = to.norm();
                let arrive = if last { 0.02 } else { 0.25 };
                if dist < arrive && (!last || v < 0.05) {
                    break;
                }
                let err = if dist > 0.05 { wrap(to.y.atan2(to.x) - h) } else { 0.0 };
                let omega = (3.0 * err).clamp(-self.max_turn, self.max_turn);
                let align = err.cos().max(0.0).powi(2);
                let cap = if last { (2.0 * accel * (dist - 0.01).max(0.0)).sqrt() } else { f64::INFINITY };
                let desired = self.max_speed.min(cap) * align;
                v += (desired - v).clamp(-accel * self.dt, accel * self.dt);
                h = wrap(h + omega * self.dt);
                let step = (v * self.dt).min(dist);
                p += dir(h) * step;
                track.push(p, h, v);
            }
        }
        if let Some(f) = facing {
            loop {
                if track.len() >= max_frames {
                    return false;
                }
                let err = wrap(f - h);
                if err.abs() < 0.005 {
                    break;
                }
                let omega = (3.0 * err).clamp(-self.max_turn, self.max_turn);
                let turn = omega * self.dt;
                h = wrap(h + if turn.abs() > err.abs() { err } else { turn });
                track.push(p, h, 0.0);
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    lift: f64,
    land: f64,
    from: Vector2<f64>,
    to: Vector2<f64>,
}

/// Footfalls for both feet along a track.
struct Footwork {
    start: [Vector2<f64>; 2],
    steps: [Vec<Step>; 2],
    swing: f64,
    raise: f64,
    lift: f64,
}

const HEEL_RAISE: f64 = 0.004;

impl Footwork {
    fn plan(rig: &Rig, track: &Track, fps: f64, period: f64, first: usize, lift: f64) -> Self {
        let dt = 1.0 / fps;
        let side_offset = |i: usize, side: usize| {
            let (p, h, _) = track.at(i);
            let right = dir(h - PI / 2.0);
            p + right * rig.offsets[rig.hip[side]].x.abs()
        };
        let start = [side_offset(0, 0), side_offset(0, 1)];
        let mut planted = start;
        let mut steps: [Vec<Step>; 2] = [Vec::new(), Vec::new()];
        let swing = 0.8 * period;
        let end = track.len() as f64 * dt;
        let mut k = 1usize;
        loop {
            let lift_t = k as f64 * period;
            if lift_t + swing > end {
                break;
            }
            let side = (first + k) % 2;
            let ahead = ((lift_t + 1.4 * period) * fps).round() as usize;
            let target = side_offset(ahead, side);
            if (target - planted[side]).norm() > 0.02 {
                steps[side].push(Step {
                    lift: lift_t,
                    land: lift_t + swing,
                    from: planted[side],
                    to: target,
                });
                planted[side] = target;
            }
            k += 1;
        }
        Self {
            start,
            steps,
            swing,
            raise: 0.2 * period,
            lift,
        }
    }

    fn foot(&self, side: usize, t: f64) -> Vector3<f64> {
        let mut at = self.start[side];
        for s in &self.steps[side] {
            if t < s.lift - self.raise {
                break;
            }
            if t < s.lift {
                let r = HEEL_RAISE * (t - (s.lift - self.raise)) / self.raise;
                return Vector3::new(s.from.x, s.from.y, r);
            }
            if t < s.land {
                let u = (t - s.lift) / self.swing;
                let e = u * u * u * (u * (u * 6.0 - 15.0) + 10.0);
                let xy = s.from + (s.to - s.from) * e;
                let z = HEEL_RAISE * (1.0 - u) + self.lift * (PI * u).sin().powi(2);
                return Vector3::new(xy.x, xy.y, z);
            }
            at = s.to;
        }
        Vector3::new(at.x, at.y, 0.0)
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Per-frame reach overlay: crouch, bend and right-wrist target.
#[derive(Debug, Clone, Copy)]
struct ReachPlan {
    start: f64,
    arrive: f64,
    crouch: f64,
    bend: f64,
    target: Vector3<f64>,
}

impl ReachPlan {
    fn progress(&self, t: f64) -> f64 {
        smoothstep((t - self.start) / (self.arrive - self.start))
    }
}

fn render(
    rig: &Rig,
    skeleton: &Skeleton,
    track: &Track,
    feet: &Footwork,
    gait: &GaitParams,
    fps: f64,
    reach: Option<&ReachPlan>,
    airborne: Option<(usize, usize, f64)>,
) -> Result<Vec<Pose>> {
    let mut poses = Vec::with_capacity(track.len());
    let mut phase = 0.0;
    for i in 0..track.len() {
        let t = i as f64 / fps;
        let (p, h, v) = track.at(i);
        phase += PI * v / fps / 0.4;
        let amp = 0.12 * (v / 0.8).min(1.0);
        let mut height = gait.standing_height - gait.walking_dip * (v / 0.6).min(1.0) + 0.008 * (2.0 * phase).cos() * (v / 0.8).min(1.0);
        let mut bend = 0.0;
        let mut lift = 0.0;
        if let Some(r) = reach {
            let u = r.progress(t);
            height -= r.crouch * u;
            bend = r.bend * u;
        }
        if let Some((a, b, dz)) = airborne {
            if i >= a && i < b {
                lift = dz * (PI * (i - a) as f64 / (b - a) as f64).sin();
            }
        }
        let mut posture = Posture {
            pelvis: Vector3::new(p.x, p.y, height + lift),
            yaw: yaw_for(h),
            bend,
            feet: [feet.foot(0, t), feet.foot(1, t)],
            wrists: [Vector3::zeros(); 2],
        };
        for side in 0..2 {
            posture.feet[side].z += lift;
            let swing = amp * (phase + PI * side as f64).sin();
            posture.wrists[side] = rig.hanging_wrist(&posture, side, swing);
        }
        if let Some(r) = reach {
            let u = r.progress(t);
            posture.wrists[0] = posture.wrists[0] * (1.0 - u) + r.target * u;
        }
        poses.push(rig.build(skeleton, &posture)?);
    }
    Ok(poses)
}

fn locomotion_clip(cfg: &SyntheticGenConfig, rig: &Rig, skeleton: &Skeleton, rng: &mut ChaCha8Rng, floating: bool) -> Result<Vec<Pose>> {
    let fps = cfg.fps;
    let frames = ((cfg.locomotion_seconds.sample(rng) * fps).round() as usize).max(2);
    let start = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let heading = rng.random_range(-PI..PI);
    let drive = Drive {
        dt: 1.0 / fps,
        max_speed: cfg.gait.speed.sample(rng),
        max_turn: cfg.gait.turn_rate.sample(rng),
    };
    let mut track = Track::default();
    track.push(start, heading, 0.0);
    let mut waypoints = Vec::new();
    let mut at = start;
    let mut h = heading;
    for _ in 0..4 {
        h += rng.random_range(-2.0..2.0);
        at += dir(h) * rng.random_range(1.0..3.0);
        waypoints.push(at);
    }
    let facing = Some(wrap(h + rng.random_range(-1.5..1.5)));
    drive.run(&mut track, &waypoints, facing, frames);
    if track.len() < frames {
        track.hold(frames - track.len());
    }
    let period = cfg.gait.step_period.sample(rng);
    let feet = Footwork::plan(rig, &track, fps, period, rng.random_range(0..2), cfg.gait.foot_lift);
    let airborne = floating.then(|| {
        let a = rng.random_range(0..frames / 2);
        (a, (a + (0.5 * fps) as usize).min(frames), rng.random_range(0.6..0.8))
    });
    render(rig, skeleton, &track, &feet, &cfg.gait, fps, None, airborne)
}

/// Crouch depth and spine bend that bring the shoulder to a comfortable
/// height above a target at `height`.
fn reach_posture(rig: &Rig, gait: &GaitParams, height: f64) -> (f64, f64) {
    let standing = gait.standing_height + rig.shoulder_local(0, 0.0).z;
    if height >= standing - 0.37 {
        return (0.0, 0.0);
    }
    let drop = standing - (height + 0.30);
    let bend = 1.2 * (drop / 0.77).min(1.0);
    let spine_drop = rig.offsets[rig.shoulder[0]].z * (1.0 - bend.cos());
    ((drop - spine_drop).clamp(0.0, 0.45), bend)
}

fn reaching_clip(cfg: &SyntheticGenConfig, rig: &Rig, skeleton: &Skeleton, index: u64) -> Result<(Vec<Pose>, GoalSpec)> {
    let fps = cfg.fps;
    let attempts = cfg.reach.max_attempts.max(1);
    for attempt in 0..attempts {
        let mut rng = rng_for(cfg.seed, &[1, index, attempt as u64]);
        let start = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let heading = rng.random_range(-PI..PI);
        let bearing = rng.random_range(-PI..PI);
        let distance = cfg.reach.distance.sample(&mut rng);
        let height = cfg.reach.height.sample(&mut rng);
        let target_xy = start + dir(bearing) * distance;
        let target = Vector3::new(target_xy.x, target_xy.y, height);

        let (crouch, bend) = reach_posture(rig, &cfg.gait, height);
        let shoulder = rig.shoulder_local(0, bend);
        let shoulder_z = cfg.gait.standing_height - crouch + shoulder.z;
        let dz = height - shoulder_z;
        let comfortable = 0.8 * (rig.upper_arm + rig.forearm);
        let horizontal = (comfortable * comfortable - dz * dz).max(0.12 * 0.12).sqrt();
        // stance so that the right shoulder ends up `horizontal` short of the target
        let facing = bearing;
        let forward = dir(facing);
        let right = dir(facing - PI / 2.0);
        let stance = target_xy - forward * (horizontal + shoulder.y) - right * shoulder.x;

        let drive = Drive {
            dt: 1.0 / fps,
            max_speed: cfg.gait.speed.sample(&mut rng),
            max_turn: cfg.gait.turn_rate.sample(&mut rng),
        };
        let mut track = Track::default();
        track.push(start, heading, 0.0);
        if !drive.run(&mut track, &[stance], Some(facing), (20.0 * fps) as usize) {
            continue;
        }
        let settle = rng.random_range(0..(0.3 * fps) as usize + 1);
        let reach_frames = (cfg.reach.reach_seconds.sample(&mut rng) * fps).round().max(2.0) as usize;
        let hold_frames = (cfg.reach.hold_seconds.sample(&mut rng) * fps).round() as usize;
        let reach_start = track.len() - 1 + settle;
        let target_frame = reach_start + reach_frames;
        track.hold(target_frame + hold_frames + 1 - track.len());

        let plan = ReachPlan {
            start: reach_start as f64 / fps,
            arrive: target_frame as f64 / fps,
            crouch,
            bend,
            target,
        };
        let period = cfg.gait.step_period.sample(&mut rng);
        let feet = Footwork::plan(rig, &track, fps, period, rng.random_range(0..2), cfg.gait.foot_lift);
        let poses = render(rig, skeleton, &track, &feet, &cfg.gait, fps, Some(&plan), None)?;
        let wrist = forward_kinematics(&poses[target_frame], skeleton)?.get(rig.wrist[0]);
        if (wrist - target).norm() < 0.01 {
            return Ok((poses, GoalSpec::new(target, target_frame)));
        }
    }
    Err(Error::InfeasibleReach { attempts })
}
