use crate::error::Result;
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;

/// Low-rank additive adapter for a frozen `[in×out]` weight: the delta is
/// `(α/r)·down·up` with `up` zero-initialized, so a fresh adapter is an
/// exact identity delta.
pub struct LoraAdapter<T: Real> {
    pub down: Tensor<T>,
    pub up: Tensor<T>,
    pub scale: f64,
}

impl<T: Real> LoraAdapter<T> {
    pub fn new(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut SeedRng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        LoraAdapter {
            down: Tensor::rand_uniform(vec![d_in, rank], bound, rng).requires_grad(),
            up: Tensor::zeros(vec![rank, d_out]).requires_grad(),
            scale: alpha / rank as f64,
        }
    }

    /// Adapter contribution for input `x [t×in]`.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let low = ops::matmul(x, &self.down)?;
        Ok(ops::scale(&ops::matmul(&low, &self.up)?, self.scale))
    }
}
