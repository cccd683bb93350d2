//! Vision-language projector: two-layer GELU MLP from raw feature width to
//! the token embedding width d.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;

pub struct MlpProjector<T: Real> {
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
    pub d_in: usize,
    pub d_out: usize,
}

impl<T: Real> MlpProjector<T> {
    /// Hidden width is 2·d_out.
    pub fn new(d_in: usize, d_out: usize, rng: &mut SeedRng) -> Self {
        let hidden = 2 * d_out;
        MlpProjector {
            w1: Tensor::rand_uniform(vec![d_in, hidden], 1.0 / (d_in as f64).sqrt(), rng)
                .requires_grad(),
            b1: Tensor::zeros(vec![hidden]).requires_grad(),
            w2: Tensor::rand_uniform(vec![hidden, d_out], 1.0 / (hidden as f64).sqrt(), rng)
                .requires_grad(),
            b2: Tensor::zeros(vec![d_out]).requires_grad(),
            d_in,
            d_out,
        }
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        vec![
            (format!("{prefix}.w1"), self.w1.clone()),
            (format!("{prefix}.b1"), self.b1.clone()),
            (format!("{prefix}.w2"), self.w2.clone()),
            (format!("{prefix}.b2"), self.b2.clone()),
        ]
    }

    pub fn project(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.cols() != self.d_in {
            return Err(Error::Contract(format!(
                "projector expects width {}, got {}",
                self.d_in,
                x.cols()
            )));
        }
        let h = ops::gelu(&ops::add_bias(&ops::matmul(x, &self.w1)?, &self.b1)?);
        ops::add_bias(&ops::matmul(&h, &self.w2)?, &self.b2)
    }
}
