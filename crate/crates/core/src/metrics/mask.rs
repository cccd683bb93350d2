//! Mask-level metrics: IoU, mean IoU, thresholded accuracy, and IoU-gated
//! caption scores.

use crate::error::{Error, Result};
use crate::pointcloud::scene::{InstanceMask, MaskLevel};

/// |a∩b| / |a∪b| over hard point-level masks; 1 when both empty, 0 when
/// exactly one is empty.
pub fn mask_iou(a: &InstanceMask, b: &InstanceMask) -> Result<f64> {
    if a.level != MaskLevel::Point || b.level != MaskLevel::Point {
        return Err(Error::Contract("mask_iou expects point-level masks".into()));
    }
    if !a.hard || !b.hard {
        return Err(Error::Contract("mask_iou expects hard masks".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "mask_iou over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits().into_iter().zip(b.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of samples with IoU strictly greater than `k`.
pub fn acc_at_k(ious: &[f64], k: f64) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::Degenerate("acc_at_k over empty list".into()));
    }
    Ok(ious.iter().filter(|&&v| v > k).count() as f64 / ious.len() as f64)
}

pub fn miou(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::Degenerate("miou over empty list".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Per sample: caption score if IoU > k, else 0; then the mean.
pub fn captioning_at_iou(scores: &[f64], ious: &[f64], k: f64) -> Result<f64> {
    if scores.len() != ious.len() {
        return Err(Error::Contract(format!(
            "captioning_at_iou over {} scores vs {} ious",
            scores.len(),
            ious.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Degenerate("captioning_at_iou over empty lists".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(ious)
        .map(|(&s, &i)| if i > k { s } else { 0.0 })
        .sum();
    Ok(total / scores.len() as f64)
}
