//! Per-object AUC summaries over a set of evaluated frames.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    metric_add, metric_add_s, metric_angle_trans, metric_proj2d, recall_and_auc, ModelPoints, RecallCurve,
    SymmetryGroup,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Upper end of the ADD and ADD-S threshold range, meters.
pub const ADD_RANGE_M: f64 = 0.1;
/// Upper end of the Proj.2D threshold range, pixels.
pub const PROJ2D_RANGE_PX: f64 = 40.0;

/// One ground-truth object with its metric inputs.
#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub name: String,
    pub points: ModelPoints,
    pub symmetry: SymmetryGroup,
}

/// Errors of one predicted frame against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub object: String,
    pub frame: String,
    pub add_m: f64,
    pub adds_m: f64,
    pub proj2d_px: f64,
    pub angle_deg: f64,
    pub translation_m: f64,
}

impl FrameMetrics {
    /// ADD, angle and Proj.2D take the minimum over the symmetry group; ADD-S needs no group.
    pub fn compute(
        model: &ObjectModel,
        frame: &str,
        gt: &RigidTransform,
        pred: &RigidTransform,
        intrinsics: &CameraIntrinsics,
    ) -> Result<Self> {
        let mut proj2d = f64::INFINITY;
        for g in model.symmetry.equivalent_poses(gt) {
            proj2d = proj2d.min(metric_proj2d(&model.points, &g, pred, intrinsics)?);
        }
        let mut angle = f64::INFINITY;
        let mut trans = f64::INFINITY;
        for g in model.symmetry.equivalent_poses(gt) {
            let (a, t) = metric_angle_trans(&g, pred);
            if a < angle {
                angle = a;
                trans = t;
            }
        }
        Ok(Self {
            object: model.name.clone(),
            frame: frame.to_string(),
            add_m: model.symmetry.min_over(gt, |g| metric_add(&model.points, g, pred)),
            adds_m: metric_add_s(&model.points, gt, pred),
            proj2d_px: proj2d,
            angle_deg: angle,
            translation_m: trans,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub add_auc: f64,
    pub adds_auc: f64,
    pub proj2d_auc: f64,
    #[serde(rename = "recall_at_0.1d")]
    pub recall_at_tenth_diameter: f64,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectCurves {
    pub add: RecallCurve,
    pub adds: RecallCurve,
    pub proj2d: RecallCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_object: BTreeMap<String, ObjectSummary>,
    #[serde(skip)]
    pub frames: Vec<FrameMetrics>,
    #[serde(skip)]
    pub curves: BTreeMap<String, ObjectCurves>,
}

impl MetricReport {
    /// Groups `frames` by object; `diameters` supplies each object's diameter.
    pub fn from_frames(frames: Vec<FrameMetrics>, diameters: &BTreeMap<String, f64>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut groups: BTreeMap<&str, Vec<&FrameMetrics>> = BTreeMap::new();
        for f in &frames {
            groups.entry(&f.object).or_default().push(f);
        }
        let mut per_object = BTreeMap::new();
        let mut curves = BTreeMap::new();
        for (name, fs) in groups {
            let d = *diameters
                .get(name)
                .ok_or_else(|| Error::InvalidConfig(format!("no diameter for object {name}")))?;
            let col = |g: fn(&FrameMetrics) -> f64| fs.iter().map(|f| g(f)).collect::<Vec<_>>();
            let add = recall_and_auc(&col(|f| f.add_m), ADD_RANGE_M, Some(d))?;
            let adds = recall_and_auc(&col(|f| f.adds_m), ADD_RANGE_M, Some(d))?;
            let proj2d = recall_and_auc(&col(|f| f.proj2d_px), PROJ2D_RANGE_PX, None)?;
            per_object.insert(
                name.to_string(),
                ObjectSummary {
                    add_auc: add.auc,
                    adds_auc: adds.auc,
                    proj2d_auc: proj2d.auc,
                    recall_at_tenth_diameter: add.recall_at_tenth_diameter.unwrap_or(0.0),
                    n_frames: fs.len(),
                },
            );
            curves.insert(name.to_string(), ObjectCurves { add, adds, proj2d });
        }
        Ok(Self {
            per_object,
            frames,
            curves,
        })
    }

    pub fn frames_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for f in &self.frames {
            w.serialize(f).map_err(|e| Error::Serde(e.to_string()))?;
        }
        csv_string(w)
    }

    /// Long format: one row per object, metric and threshold.
    pub fn curves_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(["object", "metric", "threshold", "recall"]).map_err(ser)?;
        for (name, c) in &self.curves {
            for (metric, curve) in [("add", &c.add), ("adds", &c.adds), ("proj2d", &c.proj2d)] {
                for (t, r) in curve.thresholds.iter().zip(&curve.recall) {
                    w.write_record([name.as_str(), metric, &t.to_string(), &r.to_string()]).map_err(ser)?;
                }
            }
        }
        csv_string(w)
    }

    /// Writes `report.json`, `frames.csv` and `recall_curves.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::fsutil::write_json(&dir.join("report.json"), self)?;
        write_atomic(&dir.join("frames.csv"), self.frames_csv()?.as_bytes())?;
        write_atomic(&dir.join("recall_curves.csv"), self.curves_csv()?.as_bytes())
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    fn model() -> ObjectModel {
        let pts = (0..40)
            .map(|i| {
                let f = i as f64;
                Vector3::new((f * 0.7).sin() * 0.05, (f * 1.3).cos() * 0.03, (f * 0.4).sin() * 0.04)
            })
            .collect();
        ObjectModel {
            name: "a".into(),
            points: ModelPoints::new(pts).unwrap(),
            symmetry: SymmetryGroup::default(),
        }
    }

    #[test]
    fn exact_predictions_score_one() {
        let m = model();
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        let gt = RigidTransform::new(UnitQuaternion::from_euler_angles(0.2, 0.1, 0.3), Vector3::new(0.0, 0.0, 0.6));
        let frames = (0..3).map(|i| FrameMetrics::compute(&m, &i.to_string(), &gt, &gt, &k).unwrap()).collect();
        let d = BTreeMap::from([("a".to_string(), m.points.diameter)]);
        let r = MetricReport::from_frames(frames, &d).unwrap();
        let s = &r.per_object["a"];
        assert_eq!((s.add_auc, s.adds_auc, s.proj2d_auc, s.recall_at_tenth_diameter, s.n_frames), (1.0, 1.0, 1.0, 1.0, 3));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["per_object"]["a"]["recall_at_0.1d"].is_number());
        assert_eq!(r.frames_csv().unwrap().lines().count(), 4);
        assert_eq!(r.curves_csv().unwrap().lines().count(), 1 + 3 * 1000);
    }

    #[test]
    fn symmetry_forgives_the_flip() {
        let mut m = model();
        m.symmetry = SymmetryGroup::z_flip();
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        let gt = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.6));
        let flipped = gt.compose(&RigidTransform::new(m.symmetry.rotations[0], Vector3::zeros()));
        let f = FrameMetrics::compute(&m, "0", &gt, &flipped, &k).unwrap();
        assert!(f.add_m < 1e-12 && f.proj2d_px < 1e-9 && f.angle_deg < 1e-6, "{f:?}");
    }

    #[test]
    fn missing_diameter_is_an_error() {
        let m = model();
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        let gt = RigidTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.6));
        let f = FrameMetrics::compute(&m, "0", &gt, &gt, &k).unwrap();
        assert!(MetricReport::from_frames(vec![f], &BTreeMap::new()).is_err());
        assert!(matches!(MetricReport::from_frames(vec![], &BTreeMap::new()), Err(Error::EmptyInput)));
    }
}
