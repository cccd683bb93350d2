//! Positional token L_i: box center normalized to the unit cube, expanded
//! by sinusoids at 16 dyadic frequencies, then a trainable linear map to d.

use crate::encoder::ObjectProposal;
use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;

pub const NUM_FREQUENCIES: usize = 16;
/// 3 coordinates × 16 frequencies × (sin, cos).
pub const SINUSOID_DIM: usize = 3 * NUM_FREQUENCIES * 2;

/// Center of `obj`'s box normalized to `[0,1]³` within the scene bounds,
/// clamped when the box pokes outside.
pub fn normalized_center(
    obj: &ObjectProposal,
    lo: [f64; 3],
    hi: [f64; 3],
) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for a in 0..3 {
        let range = hi[a] - lo[a];
        if !(range > 0.0) {
            return Err(Error::Contract(format!(
                "degenerate scene bounds on axis {a}: [{}, {}]",
                lo[a], hi[a]
            )));
        }
        out[a] = ((obj.center[a] - lo[a]) / range).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Sinusoid expansion of a normalized center: for each axis and frequency
/// 2^k (k = 0..16), sin(2^k·π·x) then cos(2^k·π·x).
pub fn sinusoid_features(center: [f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(SINUSOID_DIM);
    for &x in &center {
        for k in 0..NUM_FREQUENCIES {
            let arg = (1u64 << k) as f64 * std::f64::consts::PI * x;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    out
}

pub struct PositionEncoder<T: Real> {
    w: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Real> PositionEncoder<T> {
    pub fn new(d_out: usize, rng: &mut SeedRng) -> Self {
        PositionEncoder {
            w: Tensor::rand_uniform(vec![SINUSOID_DIM, d_out], 1.0 / (SINUSOID_DIM as f64).sqrt(), rng)
                .requires_grad(),
            b: Tensor::zeros(vec![d_out]).requires_grad(),
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![("pos_enc.w".into(), self.w.clone()), ("pos_enc.b".into(), self.b.clone())]
    }

    /// L_i as a `[1×d]` row.
    pub fn encode(&self, obj: &ObjectProposal, lo: [f64; 3], hi: [f64; 3]) -> Result<Tensor<T>> {
        let center = normalized_center(obj, lo, hi)?;
        let feats = sinusoid_features(center);
        let x = Tensor::from_f64s(vec![1, SINUSOID_DIM], &feats);
        ops::add_bias(&ops::matmul(&x, &self.w)?, &self.b)
    }
}
