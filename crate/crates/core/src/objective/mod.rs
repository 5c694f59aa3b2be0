//! Render-and-compare objective: depth, mask, IoU and latent losses with
//! analytic pose gradients.

mod losses;
mod total;
mod trace;

pub use losses::{loss_depth, loss_iou, loss_mask, loss_volume_l1, LossValue, LOG_CLAMP};
pub use total::{query_in_object, total_loss, LossBreakdown, LossOptions, LossWeights, QueryContext};
pub use trace::{LossTrace, TraceRow};
