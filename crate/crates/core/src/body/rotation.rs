//! Continuous 6D rotation representation.
//!
//! A rotation is stored as the first two columns `a`, `b` of its matrix. Any
//! pair of non-collinear vectors decodes to a proper rotation through
//! Gram-Schmidt, which makes the encoding a convenient regression target.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEGENERATE_NORM: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSixD {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Default for RotationSixD {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationSixD {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self {
            a: Vector3::x(),
            b: Vector3::y(),
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            a: Vector3::new(v[0], v[1], v[2]),
            b: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            a: Vector3::new(v[0], v[1], v[2]),
            b: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a.x, self.a.y, self.a.z, self.b.x, self.b.y, self.b.z]
    }

    /// Decodes to a rotation matrix by Gram-Schmidt on `(a, b)`.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>> {
        sixd_to_matrix(self)
    }

    /// Rotates both columns about the world z axis by `angle`.
    pub fn rotated_z(&self, angle: f64) -> Self {
        Self {
            a: rotate_z(&self.a, angle),
            b: rotate_z(&self.b, angle),
        }
    }

    /// Global z Euler angle under the extrinsic z-y-x convention.
    pub fn yaw(&self) -> f64 {
        yaw_of(self)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Gram-Schmidt decode: `c1 = â`, `c2 = normalize(b − (b·c1)c1)`, `c3 = c1 × c2`.
pub fn sixd_to_matrix(r: &RotationSixD) -> Result<Matrix3<f64>> {
    if !r.is_finite() {
        return Err(Error::DegenerateRotation("non-finite components"));
    }
    let na = r.a.norm();
    if na < DEGENERATE_NORM {
        return Err(Error::DegenerateRotation("first column has zero length"));
    }
    let c1 = r.a / na;
    let u = r.b - c1 * c1.dot(&r.b);
    let nu = u.norm();
    if nu < DEGENERATE_NORM * r.b.norm().max(1.0) {
        return Err(Error::DegenerateRotation("columns are collinear"));
    }
    let c2 = u / nu;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

/// Takes the first two columns of an orthonormal matrix.
pub fn matrix_to_sixd(m: &Matrix3<f64>) -> Result<RotationSixD> {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if !err.is_finite() || err > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::InvalidRotation(err.max((det - 1.0).abs())));
    }
    Ok(RotationSixD {
        a: m.column(0).into_owned(),
        b: m.column(1).into_owned(),
    })
}

/// Yaw extraction: `atan2(m10, m00)` of the decoded matrix.
///
/// Since `m[(1,0)]` and `m[(0,0)]` are `a.y/|a|` and `a.x/|a|`, this is
/// `atan2(a.y, a.x)`. When the first column points straight along z the
/// angle is `atan2(0, 0) = 0`.
pub fn yaw_of(r: &RotationSixD) -> f64 {
    r.a.y.atan2(r.a.x)
}

pub fn rotate_z(v: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Rotation matrix about z.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_decodes_to_identity() {
        let m = sixd_to_matrix(&RotationSixD::identity()).unwrap();
        assert_abs_diff_eq!(m, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn scale_is_normalized_away() {
        let r = RotationSixD::from_array([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        assert_abs_diff_eq!(r.to_matrix().unwrap(), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = RotationSixD::from_array([0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(r.to_matrix().unwrap(), rot_z(FRAC_PI_2), epsilon = 1e-15);
        assert_abs_diff_eq!(r.yaw(), FRAC_PI_2, epsilon = 1e-15);
        let back = matrix_to_sixd(&rot_z(FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!(back.a, r.a, epsilon = 1e-15);
        assert_abs_diff_eq!(back.b, r.b, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let collinear = RotationSixD::from_array([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(collinear.to_matrix(), Err(Error::DegenerateRotation(_))));
        let zero = RotationSixD::from_array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(zero.to_matrix(), Err(Error::DegenerateRotation(_))));
    }

    #[test]
    fn non_orthonormal_matrix_is_rejected() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(matrix_to_sixd(&m), Err(Error::InvalidRotation(_))));
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matrix_to_sixd(&reflection).is_err());
    }

    #[test]
    fn yaw_conventions() {
        assert_eq!(RotationSixD::identity().yaw(), 0.0);
        let rx = matrix_to_sixd(&rot_x(FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!(rx.yaw(), 0.0, epsilon = 1e-15);
        // first column straight up: documented atan2(0, 0) branch
        let up = matrix_to_sixd(&rot_y(-FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!(up.a, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(up.yaw(), 0.0, epsilon = 1e-15);
    }
}
