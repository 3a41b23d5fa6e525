//! The three-term objective: reconstruction, KL and joint-position error.

use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, integrate_delta, Pose, PoseDelta, Skeleton};
use crate::error::{Error, Result};
use crate::nn::{kl_divergence, GaussianParams, KlDirection};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub kl: f64,
    pub joint: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn assemble(rec: f64, kl: f64, joint: f64, alpha: f64) -> Self {
        Self {
            rec,
            kl,
            joint,
            total: rec + alpha * kl + joint,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rec.is_finite() && self.kl.is_finite() && self.joint.is_finite() && self.total.is_finite()
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Single-transition loss on raw deltas with the standard KL direction.
pub fn compute_loss(
    true_delta: &PoseDelta,
    predicted_delta: &PoseDelta,
    gaussian: &GaussianParams,
    prev_pose: &Pose,
    skeleton: &Skeleton,
    alpha: f64,
) -> Result<LossBreakdown> {
    compute_loss_with(true_delta, predicted_delta, gaussian, prev_pose, skeleton, alpha, KlDirection::Standard)
}

pub fn compute_loss_with(
    true_delta: &PoseDelta,
    predicted_delta: &PoseDelta,
    gaussian: &GaussianParams,
    prev_pose: &Pose,
    skeleton: &Skeleton,
    alpha: f64,
    direction: KlDirection,
) -> Result<LossBreakdown> {
    let (t, p) = (true_delta.to_vec(), predicted_delta.to_vec());
    if t.len() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "predicted delta",
            expected: t.len(),
            got: p.len(),
        });
    }
    let rec = mse(&t, &p);
    let kl = kl_divergence(gaussian, direction);
    let truth = forward_kinematics(&integrate_delta(prev_pose, true_delta)?, skeleton)?.flatten();
    let pred = forward_kinematics(&integrate_delta(prev_pose, predicted_delta)?, skeleton)?.flatten();
    let joint = mse(&truth, &pred);
    Ok(LossBreakdown::assemble(rec, kl, joint, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::rotation::rot_z;
    use crate::body::{matrix_to_sixd, JointDef, RotationSixD, SkeletonDef};

    fn arm() -> Skeleton {
        let j = |name: &str, parent: Option<&str>, offset: [f64; 3]| JointDef {
            name: name.into(),
            parent: parent.map(Into::into),
            offset,
        };
        Skeleton::from_def(&SkeletonDef {
            forward: [0.0, 1.0, 0.0],
            joints: vec![
                j("pelvis", None, [0.0; 3]),
                j("right_elbow", Some("pelvis"), [0.3, 0.0, 0.0]),
                j("right_wrist", Some("right_elbow"), [0.25, 0.0, 0.0]),
                j("left_foot", Some("pelvis"), [0.0, 0.0, -0.9]),
                j("right_foot", Some("pelvis"), [0.0, 0.0, -0.9]),
            ],
        })
        .unwrap()
    }

    fn setup() -> (Skeleton, Pose, PoseDelta) {
        let s = arm();
        let prev = Pose::rest(&s, 0.9);
        let mut d = PoseDelta::zero(s.joint_count());
        d.translation.x = 0.02;
        (s, prev, d)
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let (s, prev, d) = setup();
        let l = compute_loss(&d, &d, &GaussianParams::standard(4), &prev, &s, 1e-2).unwrap();
        assert_eq!(l, LossBreakdown::default());
    }

    #[test]
    fn elbow_rotation_moves_only_the_wrist() {
        let (s, prev, d) = setup();
        let elbow = s.index_of("right_elbow").unwrap();
        let mut pred = d.clone();
        let bent: RotationSixD = matrix_to_sixd(&rot_z(0.3)).unwrap();
        let id = RotationSixD::identity().to_array();
        let bent = bent.to_array();
        pred.joint_rotations[elbow] = std::array::from_fn(|k| bent[k] - id[k]);
        let l = compute_loss(&d, &pred, &GaussianParams::standard(4), &prev, &s, 1e-2).unwrap();
        assert!(l.rec > 0.0 && l.joint > 0.0);

        let truth = forward_kinematics(&integrate_delta(&prev, &d).unwrap(), &s).unwrap();
        let moved = forward_kinematics(&integrate_delta(&prev, &pred).unwrap(), &s).unwrap();
        let wrist = s.right_wrist();
        for j in 0..s.joint_count() {
            let shift = (truth.get(j) - moved.get(j)).norm();
            if j == wrist {
                assert!(shift > 0.05);
            } else {
                assert_eq!(shift, 0.0, "joint {j}");
            }
        }
        let per_wrist = (truth.get(wrist) - moved.get(wrist)).norm_squared() / (3 * s.joint_count()) as f64;
        assert!((l.joint - per_wrist).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_drops_kl() {
        let (s, prev, d) = setup();
        let mut pred = d.clone();
        pred.translation.y = 0.01;
        let g = GaussianParams::new(vec![0.5, -0.3], vec![0.2, -0.1]).unwrap();
        let l = compute_loss(&d, &pred, &g, &prev, &s, 0.0).unwrap();
        assert!(l.kl > 0.0);
        assert_eq!(l.total, l.rec + l.joint);
        let l2 = compute_loss(&d, &pred, &g, &prev, &s, 0.5).unwrap();
        assert_eq!(l2.total, l2.rec + 0.5 * l2.kl + l2.joint);
    }
}
