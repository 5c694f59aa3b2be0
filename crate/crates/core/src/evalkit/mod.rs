//! Pose metrics, recall/AUC summaries and the analytic synthetic-scene oracle.

mod metrics;
mod report;
mod synth;

pub use metrics::{
    metric_add, metric_add_s, metric_angle_trans, metric_proj2d, recall_and_auc, recall_at,
    ModelPoints, RecallCurve, SymmetryGroup, AUC_STEPS,
};
pub use report::{FrameMetrics, MetricReport, ObjectCurves, ObjectModel, ObjectSummary, ADD_RANGE_M, PROJ2D_RANGE_PX};
pub use synth::{
    orbit_poses, perturb_pose, random_object, random_pose, scale_primitive, Hit, Primitive, SyntheticScene, Texture,
};
