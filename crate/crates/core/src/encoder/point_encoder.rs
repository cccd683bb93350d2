//! Scene backbone stand-in: per-point MLP over normalized position and
//! color, k-NN mean aggregation for local context, then superpoint pooling.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;
use crate::pointcloud::pooling::pool_features;
use crate::pointcloud::scene::PointCloud;
use crate::pointcloud::superpoint::SuperpointPartition;

pub const KNN_K: usize = 8;

/// Neighbor lists (self included) by Euclidean distance, ties broken by
/// point index. Depends only on geometry, so callers cache it per scene.
/// Falls back to one global group when the scene has fewer than `k` points.
pub fn knn_groups(positions: &[[f64; 3]], k: usize) -> Vec<Vec<usize>> {
    let n = positions.len();
    if n <= k {
        return (0..n).map(|_| (0..n).collect()).collect();
    }
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .map(|j| {
                let d: f64 = (0..3)
                    .map(|a| (positions[i][a] - positions[j][a]).powi(2))
                    .sum();
                (d, j)
            })
            .collect();
        dists.select_nth_unstable_by(k - 1, |a, b| {
            a.partial_cmp(b).expect("finite distances")
        });
        let mut idx: Vec<usize> = dists[..k].iter().map(|&(_, j)| j).collect();
        idx.sort_unstable();
        groups.push(idx);
    }
    groups
}

/// Per-point MLP (6 → hidden → d_dec) with ReLU.
pub struct PointEncoder<T: Real> {
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
    pub d_out: usize,
}

impl<T: Real> PointEncoder<T> {
    pub fn new(hidden: usize, d_out: usize, rng: &mut SeedRng) -> Self {
        PointEncoder {
            w1: Tensor::rand_uniform(vec![6, hidden], 1.0 / 6f64.sqrt(), rng).requires_grad(),
            b1: Tensor::zeros(vec![hidden]).requires_grad(),
            w2: Tensor::rand_uniform(vec![hidden, d_out], 1.0 / (hidden as f64).sqrt(), rng)
                .requires_grad(),
            b2: Tensor::zeros(vec![d_out]).requires_grad(),
            d_out,
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![
            ("encoder.w1".into(), self.w1.clone()),
            ("encoder.b1".into(), self.b1.clone()),
            ("encoder.w2".into(), self.w2.clone()),
            ("encoder.b2".into(), self.b2.clone()),
        ]
    }

    /// Point inputs: position normalized to scene bounds, then color.
    fn point_inputs(pc: &PointCloud) -> Result<Tensor<T>> {
        let (lo, hi) = pc.bounds();
        let mut data = Vec::with_capacity(pc.len() * 6);
        for (p, c) in pc.positions.iter().zip(&pc.colors) {
            for a in 0..3 {
                let range = hi[a] - lo[a];
                let v = if range > 0.0 { (p[a] - lo[a]) / range } else { 0.5 };
                data.push(T::lit(v));
            }
            for a in 0..3 {
                data.push(T::lit(c[a]));
            }
        }
        Ok(Tensor::from_vec(vec![pc.len(), 6], data))
    }

    /// Features for the whole scene at superpoint level `[S×d_out]`, with
    /// precomputed k-NN groups (see [`knn_groups`]).
    pub fn encode_with_groups(
        &self,
        pc: &PointCloud,
        sp: &SuperpointPartition,
        groups: &[Vec<usize>],
    ) -> Result<Tensor<T>> {
        if pc.len() != sp.num_points() {
            return Err(Error::Contract(format!(
                "encode_points: {} points vs partition over {}",
                pc.len(),
                sp.num_points()
            )));
        }
        let x = Self::point_inputs(pc)?;
        let h = ops::relu(&ops::add_bias(&ops::matmul(&x, &self.w1)?, &self.b1)?);
        let f = ops::add_bias(&ops::matmul(&h, &self.w2)?, &self.b2)?;
        let local = ops::group_mean(&f, groups)?;
        pool_features(&local, sp)
    }

    pub fn encode(&self, pc: &PointCloud, sp: &SuperpointPartition) -> Result<Tensor<T>> {
        let groups = knn_groups(&pc.positions, KNN_K);
        self.encode_with_groups(pc, sp, &groups)
    }
}
