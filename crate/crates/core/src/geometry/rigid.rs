use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{quat_exp, quat_log_unit, LogQuaternion};
use crate::error::{Error, Result};

/// Rigid motion `x -> R x + t`. Extrinsics map object coordinates into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RigidRepr", into = "RigidRepr")]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RigidRepr {
    /// `(w, x, y, z)`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<RigidRepr> for RigidTransform {
    fn from(r: RigidRepr) -> Self {
        let [w, x, y, z] = r.rotation;
        RigidTransform {
            rotation: UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<RigidTransform> for RigidRepr {
    fn from(t: RigidTransform) -> Self {
        let q = t.rotation;
        RigidRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: t.translation.into(),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_log(omega: &LogQuaternion, translation: Vector3<f64>) -> Self {
        Self::new(quat_exp(omega), translation)
    }

    pub fn log_rotation(&self) -> LogQuaternion {
        quat_log_unit(&self.rotation)
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4x4 as persisted in scene files.
    pub fn to_row_major(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    /// Accepts a homogeneous matrix whose 3x3 block satisfies `R^T R = I` within
    /// `tolerance` and `det R = +1`.
    pub fn from_matrix(m: &Matrix4<f64>, tolerance: f64) -> Result<Self> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        let bottom = (m[(3, 0)].abs() + m[(3, 1)].abs() + m[(3, 2)].abs() + (m[(3, 3)] - 1.0).abs())
            .max(0.0);
        if !(orth <= tolerance) || !((det - 1.0).abs() <= tolerance) || !(bottom <= tolerance) {
            return Err(Error::InvalidCamera(format!(
                "not a rigid transform: orthogonality error {orth:.3e}, det {det:.6}"
            )));
        }
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Ok(Self::new(
            rotation,
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        ))
    }

    pub fn from_row_major(rows: &[[f64; 4]; 4], tolerance: f64) -> Result<Self> {
        let m = Matrix4::from_fn(|r, c| rows[r][c]);
        Self::from_matrix(&m, tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.5f64..1.5),
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_map(|(w, t)| {
                RigidTransform::from_log(&LogQuaternion::new(w[0], w[1], w[2]), Vector3::from(t))
            })
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.to_matrix() - b.to_matrix()).abs().max() < tol
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9));
        }

        #[test]
        fn inverse_cancels(a in arb_transform()) {
            prop_assert!(close(&a.compose(&a.inverse()), &RigidTransform::identity(), 1e-9));
            prop_assert!(close(&a.inverse().compose(&a), &RigidTransform::identity(), 1e-9));
        }

        #[test]
        fn matrix_round_trip(a in arb_transform()) {
            let back = RigidTransform::from_row_major(&a.to_row_major(), 1e-9).unwrap();
            prop_assert!(close(&a, &back, 1e-12));
        }
    }

    #[test]
    fn rejects_scaled_matrix() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 1.1;
        assert!(RigidTransform::from_matrix(&m, 1e-5).is_err());
        let mut m = Matrix4::identity();
        m[(2, 2)] = -1.0;
        assert!(RigidTransform::from_matrix(&m, 1e-5).is_err());
    }
}
