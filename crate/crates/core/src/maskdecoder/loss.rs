//! Mask loss (BCE + Dice over superpoint logits) and the combined
//! training objective.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::pointcloud::scene::{InstanceMask, MaskLevel};

pub const DICE_EPS: f64 = 1.0;

/// Dice loss `1 − (2·Σ p·g + ε)/(Σ p + Σ g + ε)` with `p = sigmoid(logits)`.
pub fn dice_loss<T: Real>(logits: &Tensor<T>, gt: &[f64], eps: f64) -> Result<Tensor<T>> {
    if logits.len() != gt.len() {
        return Err(Error::Contract(format!(
            "dice over {} logits vs {} targets",
            logits.len(),
            gt.len()
        )));
    }
    let g = Tensor::from_f64s(logits.shape().to_vec(), gt);
    let p = ops::sigmoid(logits);
    let inter = ops::sum(&ops::mul(&p, &g)?);
    let num = ops::add_scalar(&ops::scale(&inter, 2.0), eps);
    let den = ops::add_scalar(&ops::add(&ops::sum(&p), &ops::sum(&g))?, eps);
    Ok(ops::add_scalar(&ops::neg(&ops::div(&num, &den)?), 1.0))
}

/// BCE and Dice components of L_mask for superpoint-level logits against a
/// hard superpoint-level ground-truth mask.
pub fn mask_loss<T: Real>(
    logits: &Tensor<T>,
    gt: &InstanceMask,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if gt.level != MaskLevel::Superpoint {
        return Err(Error::Contract("mask_loss expects a superpoint-level mask".into()));
    }
    if !gt.hard {
        return Err(Error::Contract("mask_loss expects a hard ground-truth mask".into()));
    }
    if logits.len() != gt.len() {
        return Err(Error::Contract(format!(
            "mask_loss over {} logits vs {} superpoints",
            logits.len(),
            gt.len()
        )));
    }
    let targets: Vec<T> = gt.values.iter().map(|&v| T::lit(v)).collect();
    let bce = ops::bce_with_logits(logits, &targets)?;
    let dice = dice_loss(logits, &gt.values, DICE_EPS)?;
    Ok((bce, dice))
}

/// Scalar components of one training step; `total` is built from the same
/// graph nodes, so `total == llm + (bce + dice)` holds exactly.
pub struct LossBreakdown<T: Real> {
    pub total: Tensor<T>,
    pub llm: Tensor<T>,
    pub mask: Tensor<T>,
    pub bce: Tensor<T>,
    pub dice: Tensor<T>,
}

pub fn total_loss<T: Real>(
    llm: Tensor<T>,
    bce: Tensor<T>,
    dice: Tensor<T>,
) -> Result<LossBreakdown<T>> {
    let mask = ops::add(&bce, &dice)?;
    let total = ops::add(&llm, &mask)?;
    Ok(LossBreakdown { total, llm, mask, bce, dice })
}
