//! Detection mathematics: attention inserts, box losses and evaluation.

mod attention;
mod boxes;
mod eval;
mod losses;

pub use attention::{AttentionConfig, AttentionKind, Cbam};
pub use boxes::{aspect_term, ciou_loss, ciou_loss_grad, diou_penalty, iou, BoundingBox};
pub use eval::{
    average_precision, fbeta, map50, match_counts, merge_detections, read_detections, write_detections, write_pr_csv, ClassAp, DetectionSet,
    MapReport, PrPoint, IOU_THRESHOLD,
};
pub use losses::{bce_loss, bce_loss_grad, dfl_loss, dfl_loss_grad, PROB_EPS};
