//! Pose-error metrics and recall/AUC summaries.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Object-frame surface samples and the object diameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoints {
    pub points: Vec<Vector3<f64>>,
    pub diameter: f64,
}

impl ModelPoints {
    /// Computes the exact diameter (max pairwise distance).
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::EmptyInput);
        }
        let mut d2: f64 = 0.0;
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                d2 = d2.max((a - b).norm_squared());
            }
        }
        Ok(Self {
            points,
            diameter: d2.sqrt(),
        })
    }
}

pub fn metric_add(points: &ModelPoints, gt: &RigidTransform, pred: &RigidTransform) -> f64 {
    let sum: f64 = points
        .points
        .iter()
        .map(|x| (pred.apply(x) - gt.apply(x)).norm())
        .sum();
    sum / points.points.len() as f64
}

pub fn metric_add_s(points: &ModelPoints, gt: &RigidTransform, pred: &RigidTransform) -> f64 {
    let g: Vec<Vector3<f64>> = points.points.iter().map(|x| gt.apply(x)).collect();
    let sum: f64 = points
        .points
        .iter()
        .map(|x| {
            let p = pred.apply(x);
            g.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    sum / points.points.len() as f64
}

pub fn metric_proj2d(
    points: &ModelPoints,
    gt: &RigidTransform,
    pred: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> Result<f64> {
    let mut sum = 0.0;
    for x in &points.points {
        let (a, _) = intrinsics.project(&pred.apply(x))?;
        let (b, _) = intrinsics.project(&gt.apply(x))?;
        sum += (a - b).norm();
    }
    Ok(sum / points.points.len() as f64)
}

/// Geodesic rotation error in degrees and translation error in meters.
pub fn metric_angle_trans(gt: &RigidTransform, pred: &RigidTransform) -> (f64, f64) {
    let dot = gt.rotation.coords.dot(&pred.rotation.coords).abs().min(1.0);
    (
        (2.0 * dot.acos()).to_degrees(),
        (gt.translation - pred.translation).norm(),
    )
}

/// Finite rotation group of object symmetries; the identity is implied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    #[serde(default)]
    pub rotations: Vec<UnitQuaternion<f64>>,
}

impl SymmetryGroup {
    /// 180 degree flip about the object z axis.
    pub fn z_flip() -> Self {
        Self {
            rotations: vec![UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI)],
        }
    }

    /// Ground-truth poses equivalent under the group.
    pub fn equivalent_poses(&self, gt: &RigidTransform) -> Vec<RigidTransform> {
        std::iter::once(*gt)
            .chain(
                self.rotations
                    .iter()
                    .map(|g| gt.compose(&RigidTransform::new(*g, Vector3::zeros()))),
            )
            .collect()
    }

    /// Minimum of `metric` over all equivalent ground-truth poses.
    pub fn min_over<F: Fn(&RigidTransform) -> f64>(&self, gt: &RigidTransform, metric: F) -> f64 {
        self.equivalent_poses(gt)
            .iter()
            .map(metric)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Number of thresholds on the AUC grid.
pub const AUC_STEPS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
    pub auc: f64,
    /// Recall at `0.1 * diameter` when a diameter was given.
    pub recall_at_tenth_diameter: Option<f64>,
}

/// Fraction of `values` at or below `threshold`.
pub fn recall_at(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&v| v <= threshold).count() as f64 / values.len() as f64
}

/// Recall over the left-closed grid `tau_i = i * range_max / 1000`, `i < 1000`;
/// AUC is the mean recall over the grid.
pub fn recall_and_auc(values: &[f64], range_max: f64, diameter: Option<f64>) -> Result<RecallCurve> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) || !(range_max > 0.0) {
        return Err(Error::InvalidConfig("metric values must be finite and non-negative".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let thresholds: Vec<f64> = (0..AUC_STEPS)
        .map(|i| i as f64 * range_max / AUC_STEPS as f64)
        .collect();
    let recall: Vec<f64> = thresholds
        .iter()
        .map(|t| sorted.partition_point(|v| v <= t) as f64 / n)
        .collect();
    let auc = recall.iter().sum::<f64>() / AUC_STEPS as f64;
    Ok(RecallCurve {
        thresholds,
        recall,
        auc,
        recall_at_tenth_diameter: diameter.map(|d| recall_at(values, 0.1 * d)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat_exp;
    use crate::geometry::LogQuaternion;
    use proptest::prelude::*;

    fn cloud() -> ModelPoints {
        let pts = (0..60)
            .map(|i| {
                let f = i as f64;
                Vector3::new((f * 0.37).sin() * 0.1, (f * 0.71).cos() * 0.05, (f * 0.13).sin() * 0.08)
            })
            .collect();
        ModelPoints::new(pts).unwrap()
    }

    fn arb_pose() -> impl Strategy<Value = RigidTransform> {
        (prop::array::uniform3(-1.5f64..1.5), prop::array::uniform3(-0.2f64..0.2)).prop_map(|(w, t)| {
            RigidTransform::new(
                quat_exp(&LogQuaternion(Vector3::from(w))),
                Vector3::new(t[0], t[1], t[2] + 0.8),
            )
        })
    }

    #[test]
    fn zero_at_identical_poses() {
        let p = cloud();
        let pose = RigidTransform::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(0.0, 0.0, 1.0));
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        assert_eq!(metric_add(&p, &pose, &pose), 0.0);
        assert_eq!(metric_add_s(&p, &pose, &pose), 0.0);
        assert_eq!(metric_proj2d(&p, &pose, &pose, &k).unwrap(), 0.0);
        assert_eq!(metric_angle_trans(&pose, &pose), (0.0, 0.0));
    }

    #[test]
    fn translation_offset_is_exact() {
        let p = cloud();
        let gt = RigidTransform::new(UnitQuaternion::from_euler_angles(0.4, 0.0, 0.3), Vector3::new(0.0, 0.0, 1.0));
        let delta = Vector3::new(0.03, -0.04, 0.0);
        let pred = RigidTransform::new(gt.rotation, gt.translation + delta);
        assert!((metric_add(&p, &gt, &pred) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn lateral_shift_moves_projection_by_fu_delta_over_z() {
        let p = ModelPoints::new(vec![Vector3::zeros(), Vector3::new(1e-3, 0.0, 0.0), Vector3::new(0.0, 1e-3, 0.0)]).unwrap();
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        let gt = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.5));
        let pred = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.01, 0.0, 0.5));
        let v = metric_proj2d(&p, &gt, &pred, &k).unwrap();
        assert!((v - 150.0 * 0.01 / 0.5).abs() < 1e-9);
    }

    #[test]
    fn half_turn_about_z() {
        let gt = RigidTransform::identity();
        let pred = RigidTransform::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI), Vector3::zeros());
        let (a, t) = metric_angle_trans(&gt, &pred);
        assert!((a - 180.0).abs() < 1e-9 && t == 0.0);
    }

    #[test]
    fn symmetric_sphere_adds_is_small() {
        let pts = crate::geometry::fibonacci_directions(500).into_iter().map(|d| d * 0.1).collect();
        let p = ModelPoints::new(pts).unwrap();
        let gt = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 1.0));
        let pred = RigidTransform::new(UnitQuaternion::from_euler_angles(0.7, -0.4, 1.1), gt.translation);
        let adds = metric_add_s(&p, &gt, &pred);
        let add = metric_add(&p, &gt, &pred);
        // lattice spacing ~ sqrt(4 pi r^2 / n)
        let spacing = (4.0 * std::f64::consts::PI * 0.01 / 500.0).sqrt();
        assert!(adds < spacing, "{adds} vs {spacing}");
        assert!(adds < 0.1 * add);
    }

    #[test]
    fn z_flip_symmetry() {
        let p = cloud();
        let gt = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 1.0));
        let flipped = gt.compose(&RigidTransform::new(SymmetryGroup::z_flip().rotations[0], Vector3::zeros()));
        assert!(metric_add(&p, &gt, &flipped) > 0.01);
        let v = SymmetryGroup::z_flip().min_over(&gt, |g| metric_add(&p, g, &flipped));
        assert!(v < 1e-12);
    }

    #[test]
    fn auc_examples() {
        let c = recall_and_auc(&[0.0; 10], 0.1, None).unwrap();
        assert_eq!(c.auc, 1.0);
        assert!(c.recall.iter().all(|&r| r == 1.0));
        let c = recall_and_auc(&[0.2, 0.3], 0.1, None).unwrap();
        assert_eq!(c.auc, 0.0);
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0 * 0.1).collect();
        let c = recall_and_auc(&uniform, 0.1, Some(0.2)).unwrap();
        assert!((c.auc - 0.5).abs() < 0.02);
        assert_eq!(c.recall_at_tenth_diameter, Some(0.2));
        assert!(matches!(recall_and_auc(&[], 1.0, None), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn adds_never_exceeds_add(gt in arb_pose(), pred in arb_pose()) {
            let p = cloud();
            prop_assert!(metric_add_s(&p, &gt, &pred) <= metric_add(&p, &gt, &pred) + 1e-15);
        }

        #[test]
        fn add_is_invariant_to_a_common_world_frame(gt in arb_pose(), pred in arb_pose(), w in arb_pose()) {
            let p = cloud();
            let a = metric_add(&p, &gt, &pred);
            let b = metric_add(&p, &w.compose(&gt), &w.compose(&pred));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn recall_is_monotone(values in prop::collection::vec(0.0f64..0.2, 1..50)) {
            let c = recall_and_auc(&values, 0.1, None).unwrap();
            prop_assert!(c.recall.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((0.0..=1.0).contains(&c.auc));
        }
    }
}
