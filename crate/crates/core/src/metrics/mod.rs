//! Evaluation metrics: the mask IoU family, caption metrics (BLEU-4,
//! classic CIDEr), IoU-gated caption scores, and exact-match variants.

pub mod mask;
pub mod report;
pub mod text;

pub use mask::{acc_at_k, captioning_at_iou, mask_iou, miou};
pub use report::{
    ExactMatchMetrics, GatedCaptionMetrics, MetricReport, QaMetrics, SegmentationMetrics,
    METRIC_VERSION,
};
pub use text::{bleu4, cider, exact_match, normalize_answer, tokens, NORMALIZATION_VERSION};
