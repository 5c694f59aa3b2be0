//! Log-quaternion chart of SO(3).
//!
//! A log quaternion is the pure-imaginary `(0, w1, w2, w3)` whose exponential
//! is a unit quaternion; the rotation angle is `2 * |omega|`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SERIES_EPS: f64 = 1e-8;
const JACOBIAN_SERIES_EPS: f64 = 1e-3;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LogQuaternion(pub Vector3<f64>);

impl LogQuaternion {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// `q = (cos|w|, w/|w| sin|w|)`; falls back to the renormalized series `(1, w)` near zero.
pub fn quat_exp(omega: &LogQuaternion) -> UnitQuaternion<f64> {
    let w = omega.0;
    let theta = w.norm();
    let q = if theta < SERIES_EPS {
        Quaternion::new(1.0, w.x, w.y, w.z)
    } else {
        let s = theta.sin() / theta;
        Quaternion::new(theta.cos(), w.x * s, w.y * s, w.z * s)
    };
    UnitQuaternion::new_normalize(q)
}

/// Picks the double-cover representative with `w >= 0`; on `w == 0` the first
/// nonzero imaginary component is made positive.
pub fn canonicalize(q: &Quaternion<f64>) -> Quaternion<f64> {
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else {
        [q.i, q.j, q.k]
            .into_iter()
            .find(|c| *c != 0.0)
            .is_some_and(|c| c < 0.0)
    };
    if flip {
        -*q
    } else {
        *q
    }
}

/// Inverse of [`quat_exp`] on the canonical branch, so `|omega| <= pi/2`.
pub fn quat_log(q: &Quaternion<f64>) -> Result<LogQuaternion> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitQuaternion(n));
    }
    let q = canonicalize(&(q / n));
    let v = Vector3::new(q.i, q.j, q.k);
    let s = v.norm();
    if s < SERIES_EPS {
        return Ok(LogQuaternion(v / q.w));
    }
    let theta = s.atan2(q.w);
    Ok(LogQuaternion(v * (theta / s)))
}

pub fn quat_log_unit(q: &UnitQuaternion<f64>) -> LogQuaternion {
    quat_log(q.quaternion()).expect("unit quaternion")
}

/// Axis-angle view: `exp(w)` rotates by `2|w|` about `w/|w|`.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    2.0 * q.w.abs().min(1.0).acos()
}

/// Derivative of `exp(omega)` as rows `(dw, dx, dy, dz)` over columns `omega_m`.
pub fn quat_exp_jacobian(omega: &LogQuaternion) -> [[f64; 3]; 4] {
    let w = omega.0;
    let theta = w.norm();
    let (s, ds_over_theta) = if theta < JACOBIAN_SERIES_EPS {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, -1.0 / 3.0 + t2 / 30.0)
    } else {
        let (sn, cs) = theta.sin_cos();
        (sn / theta, (theta * cs - sn) / (theta * theta * theta))
    };
    let mut j = [[0.0; 3]; 4];
    for m in 0..3 {
        j[0][m] = -s * w[m];
        for a in 0..3 {
            let delta = if a == m { s } else { 0.0 };
            j[a + 1][m] = delta + ds_over_theta * w[a] * w[m];
        }
    }
    j
}

fn rotation_matrix_partials(q: &Quaternion<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    #[rustfmt::skip]
    let dw = Matrix3::new(
        0.0, -z, y,
        z, 0.0, -x,
        -y, x, 0.0,
    ) * 2.0;
    #[rustfmt::skip]
    let dx = Matrix3::new(
        0.0, y, z,
        y, -2.0 * x, -w,
        z, w, -2.0 * x,
    ) * 2.0;
    #[rustfmt::skip]
    let dy = Matrix3::new(
        -2.0 * y, x, w,
        x, 0.0, z,
        -w, z, -2.0 * y,
    ) * 2.0;
    #[rustfmt::skip]
    let dz = Matrix3::new(
        -2.0 * z, -w, x,
        w, -2.0 * z, y,
        x, y, 0.0,
    ) * 2.0;
    [dw, dx, dy, dz]
}

/// Rotation `R = R_chart * R(exp(omega))` with its three partials `dR/d omega_m`.
#[derive(Clone, Debug)]
pub struct RotationJacobian {
    pub quaternion: UnitQuaternion<f64>,
    pub matrix: Matrix3<f64>,
    pub partials: [Matrix3<f64>; 3],
}

impl RotationJacobian {
    pub fn new(chart: &UnitQuaternion<f64>, omega: &LogQuaternion) -> Self {
        let local = quat_exp(omega);
        let dq = quat_exp_jacobian(omega);
        let dr_dq = rotation_matrix_partials(local.quaternion());
        let chart_matrix = chart.to_rotation_matrix().into_inner();
        let partials = std::array::from_fn(|m| {
            let mut d = Matrix3::zeros();
            for (a, dra) in dr_dq.iter().enumerate() {
                d += dra * dq[a][m];
            }
            chart_matrix * d
        });
        let quaternion = chart * local;
        Self {
            matrix: quaternion.to_rotation_matrix().into_inner(),
            quaternion,
            partials,
        }
    }

    pub fn absolute(omega: &LogQuaternion) -> Self {
        Self::new(&UnitQuaternion::identity(), omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn axis_angle_quaternion(axis: Vector3<f64>, angle: f64) -> Quaternion<f64> {
        let a = axis.normalize();
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, a.x * s, a.y * s, a.z * s)
    }

    #[test]
    fn exp_identity_and_half_turn() {
        let q = quat_exp(&LogQuaternion::zero());
        assert_eq!(q.quaternion().coords, Quaternion::new(1.0, 0.0, 0.0, 0.0).coords);
        let q = quat_exp(&LogQuaternion::new(FRAC_PI_2, 0.0, 0.0));
        assert!(q.w.abs() < 1e-15);
        assert!((q.i - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_matches_axis_angle() {
        let w = Vector3::new(0.1, 0.2, 0.3);
        let q = quat_exp(&LogQuaternion(w));
        let reference = axis_angle_quaternion(w, 2.0 * w.norm());
        assert!((q.quaternion().coords - reference.coords).norm() < 1e-14);
    }

    #[test]
    fn log_examples() {
        let w = quat_log(&Quaternion::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(w.0, Vector3::zeros());
        let w = quat_log(&Quaternion::new(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert!((w.0 - Vector3::new(0.0, FRAC_PI_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn log_rejects_non_unit() {
        assert!(matches!(
            quat_log(&Quaternion::new(1.1, 0.0, 0.0, 0.0)),
            Err(Error::NonUnitQuaternion(_))
        ));
    }

    #[test]
    fn canonical_tie_break() {
        let q = canonicalize(&Quaternion::new(0.0, 0.0, -1.0, 0.0));
        assert_eq!(q.j, 1.0);
        let q = canonicalize(&Quaternion::new(0.0, -0.6, 0.8, 0.0));
        assert_eq!(q.i, 0.6);
    }

    #[test]
    fn near_zero_series_is_unit() {
        for s in [0.0, 1e-12, 1e-9, 5e-9, 2e-8] {
            let q = quat_exp(&LogQuaternion::new(s, -s, 0.5 * s));
            assert!((q.quaternion().norm() - 1.0).abs() < 1e-15);
        }
        let q = quat_exp(&LogQuaternion::new(PI - 1e-9, 0.0, 0.0));
        assert!((q.quaternion().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_jacobian_matches_finite_differences() {
        for w in [
            Vector3::new(0.3, -0.2, 0.9),
            Vector3::new(1e-4, 2e-4, -1e-4),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.4, 0.1, 0.05),
        ] {
            let j = quat_exp_jacobian(&LogQuaternion(w));
            let h = 1e-6;
            for m in 0..3 {
                let mut wp = w;
                let mut wm = w;
                wp[m] += h;
                wm[m] -= h;
                let qp = quat_exp(&LogQuaternion(wp)).into_inner().coords;
                let qm = quat_exp(&LogQuaternion(wm)).into_inner().coords;
                let fd = (qp - qm) / (2.0 * h);
                // nalgebra stores (i, j, k, w)
                let fd = [fd[3], fd[0], fd[1], fd[2]];
                for a in 0..4 {
                    assert!((fd[a] - j[a][m]).abs() < 1e-8, "{a} {m} {} {}", fd[a], j[a][m]);
                }
            }
        }
    }

    #[test]
    fn rotation_partials_match_finite_differences() {
        let chart = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
        let w = Vector3::new(0.2, -0.4, 0.1);
        let jac = RotationJacobian::new(&chart, &LogQuaternion(w));
        let h = 1e-6;
        for m in 0..3 {
            let mut wp = w;
            let mut wm = w;
            wp[m] += h;
            wm[m] -= h;
            let rp = RotationJacobian::new(&chart, &LogQuaternion(wp)).matrix;
            let rm = RotationJacobian::new(&chart, &LogQuaternion(wm)).matrix;
            let fd = (rp - rm) / (2.0 * h);
            assert!((fd - jac.partials[m]).norm() < 1e-8);
        }
    }
}
