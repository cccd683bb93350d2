//! Feature and mask movement between point level and superpoint level.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::pointcloud::scene::{InstanceMask, MaskLevel};
use crate::pointcloud::superpoint::SuperpointPartition;

pub const DEFAULT_UNPOOL_THRESHOLD: f64 = 0.5;
pub const DEFAULT_GT_POOL_TAU: f64 = 0.5;

/// Mean-pool point features `[N×d]` to superpoint features `[S×d]`.
/// Differentiable: the gradient splits `1/|s|` to each member point.
pub fn pool_features<T: Real>(
    point_feats: &Tensor<T>,
    sp: &SuperpointPartition,
) -> Result<Tensor<T>> {
    if point_feats.rows() != sp.num_points() {
        return Err(Error::Contract(format!(
            "pool_features: {} feature rows vs {} points",
            point_feats.rows(),
            sp.num_points()
        )));
    }
    ops::group_mean(point_feats, &sp.members())
}

/// Scatter a superpoint mask back to points and binarize at `threshold`.
pub fn unpool_mask(
    sp_mask: &InstanceMask,
    sp: &SuperpointPartition,
    threshold: f64,
) -> Result<InstanceMask> {
    if sp_mask.level != MaskLevel::Superpoint || sp_mask.len() != sp.count() {
        return Err(Error::Contract(format!(
            "unpool_mask: mask of {} values at {:?} level vs {} superpoints",
            sp_mask.len(),
            sp_mask.level,
            sp.count()
        )));
    }
    let bits = sp
        .assignment()
        .iter()
        .map(|&s| sp_mask.values[s] >= threshold)
        .collect();
    Ok(InstanceMask::hard(MaskLevel::Point, bits))
}

/// Reduce a hard point mask to superpoints by majority vote: a superpoint is
/// positive iff the fraction of its member points inside the mask is ≥ `tau`.
pub fn pool_gt_mask(
    point_mask: &InstanceMask,
    sp: &SuperpointPartition,
    tau: f64,
) -> Result<InstanceMask> {
    if !point_mask.hard {
        return Err(Error::Contract("pool_gt_mask requires a hard point mask".into()));
    }
    if point_mask.level != MaskLevel::Point || point_mask.len() != sp.num_points() {
        return Err(Error::Contract(format!(
            "pool_gt_mask: mask of {} values vs {} points",
            point_mask.len(),
            sp.num_points()
        )));
    }
    let bits = sp
        .members()
        .iter()
        .map(|g| {
            let inside = g.iter().filter(|&&p| point_mask.values[p] > 0.5).count();
            inside as f64 / g.len() as f64 >= tau
        })
        .collect();
    Ok(InstanceMask::hard(MaskLevel::Superpoint, bits))
}
