//! Mask decoder: the `<SEG>` hidden state becomes a single query that
//! cross-attends over superpoint features; the refined query is scored
//! against every superpoint by scaled dot product.

use crate::error::{Error, Result};
use crate::fusion::MlpProjector;
use crate::language::LAYER_NORM_EPS;
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;

pub const DEFAULT_DECODER_LAYERS: usize = 3;

/// MLP projection of h_seg `[1×d]` into the decoder query T_text `[1×d_dec]`.
pub fn project_seg_query<T: Real>(
    projector: &MlpProjector<T>,
    h_seg: &Tensor<T>,
) -> Result<Tensor<T>> {
    if h_seg.rows() != 1 {
        return Err(Error::Contract(format!(
            "seg query projector expects a single row, got {}",
            h_seg.rows()
        )));
    }
    let q = projector.project(h_seg)?;
    q.check_finite("seg query")?;
    Ok(q)
}

struct DecoderBlock<T: Real> {
    wq: Tensor<T>,
    wk: Tensor<T>,
    wv: Tensor<T>,
    wo: Tensor<T>,
    ln1_g: Tensor<T>,
    ln1_b: Tensor<T>,
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
    ln2_g: Tensor<T>,
    ln2_b: Tensor<T>,
}

impl<T: Real> DecoderBlock<T> {
    fn new(d: usize, rng: &mut SeedRng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let w = |rng: &mut SeedRng| Tensor::rand_uniform(vec![d, d], bound, rng).requires_grad();
        DecoderBlock {
            wq: w(rng),
            wk: w(rng),
            wv: w(rng),
            wo: w(rng),
            ln1_g: Tensor::from_vec(vec![d], vec![T::one(); d]).requires_grad(),
            ln1_b: Tensor::zeros(vec![d]).requires_grad(),
            w1: Tensor::rand_uniform(vec![d, 2 * d], bound, rng).requires_grad(),
            b1: Tensor::zeros(vec![2 * d]).requires_grad(),
            w2: Tensor::rand_uniform(vec![2 * d, d], 1.0 / (2.0 * d as f64).sqrt(), rng)
                .requires_grad(),
            b2: Tensor::zeros(vec![d]).requires_grad(),
            ln2_g: Tensor::from_vec(vec![d], vec![T::one(); d]).requires_grad(),
            ln2_b: Tensor::zeros(vec![d]).requires_grad(),
        }
    }

    fn attention_weights(&self, q: &Tensor<T>, sp_feats: &Tensor<T>) -> Result<Tensor<T>> {
        let d = q.cols();
        let qn = ops::layer_norm(q, &self.ln1_g, &self.ln1_b, LAYER_NORM_EPS)?;
        let qp = ops::matmul(&qn, &self.wq)?;
        let k = ops::matmul(sp_feats, &self.wk)?;
        let scores = ops::scale(&ops::matmul(&qp, &ops::transpose(&k))?, 1.0 / (d as f64).sqrt());
        ops::softmax(&scores, 1)
    }

    // pre-LN residual blocks: the raw query passes through unchanged along
    // the residual path, so stacking blocks never loses the initial signal
    fn forward(&self, q: &Tensor<T>, sp_feats: &Tensor<T>) -> Result<Tensor<T>> {
        let attn = self.attention_weights(q, sp_feats)?;
        let v = ops::matmul(sp_feats, &self.wv)?;
        let ctx = ops::matmul(&ops::matmul(&attn, &v)?, &self.wo)?;
        let q = ops::add(q, &ctx)?;
        let qn = ops::layer_norm(&q, &self.ln2_g, &self.ln2_b, LAYER_NORM_EPS)?;
        let h = ops::gelu(&ops::add_bias(&ops::matmul(&qn, &self.w1)?, &self.b1)?);
        let ff = ops::add_bias(&ops::matmul(&h, &self.w2)?, &self.b2)?;
        ops::add(&q, &ff)
    }
}

pub struct MaskDecoder<T: Real> {
    blocks: Vec<DecoderBlock<T>>,
    pub d_dec: usize,
}

impl<T: Real> MaskDecoder<T> {
    pub fn new(d_dec: usize, layers: usize, rng: &mut SeedRng) -> Self {
        MaskDecoder {
            blocks: (0..layers).map(|_| DecoderBlock::new(d_dec, rng)).collect(),
            d_dec,
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("decoder.layer{i}");
            out.push((format!("{p}.wq"), b.wq.clone()));
            out.push((format!("{p}.wk"), b.wk.clone()));
            out.push((format!("{p}.wv"), b.wv.clone()));
            out.push((format!("{p}.wo"), b.wo.clone()));
            out.push((format!("{p}.ln1.g"), b.ln1_g.clone()));
            out.push((format!("{p}.ln1.b"), b.ln1_b.clone()));
            out.push((format!("{p}.ffn.w1"), b.w1.clone()));
            out.push((format!("{p}.ffn.b1"), b.b1.clone()));
            out.push((format!("{p}.ffn.w2"), b.w2.clone()));
            out.push((format!("{p}.ffn.b2"), b.b2.clone()));
            out.push((format!("{p}.ln2.g"), b.ln2_g.clone()));
            out.push((format!("{p}.ln2.b"), b.ln2_b.clone()));
        }
        out
    }

    /// Attention weights of block `layer` for a given query (diagnostics).
    pub fn attention_weights(
        &self,
        layer: usize,
        q: &Tensor<T>,
        sp_feats: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.blocks
            .get(layer)
            .ok_or_else(|| Error::Contract(format!("no decoder layer {layer}")))?
            .attention_weights(q, sp_feats)
    }

    /// Per-superpoint mask logits `[1×S]`.
    pub fn decode_mask(&self, query: &Tensor<T>, sp_feats: &Tensor<T>) -> Result<Tensor<T>> {
        if query.cols() != self.d_dec || sp_feats.cols() != self.d_dec {
            return Err(Error::Contract(format!(
                "decoder width {} but query is {} and features {}",
                self.d_dec,
                query.cols(),
                sp_feats.cols()
            )));
        }
        if sp_feats.rows() == 0 {
            return Err(Error::Contract("decode_mask over zero superpoints".into()));
        }
        let mut q = query.clone();
        for b in &self.blocks {
            q = b.forward(&q, sp_feats)?;
        }
        Ok(ops::scale(
            &ops::matmul(&q, &ops::transpose(sp_feats))?,
            1.0 / (self.d_dec as f64).sqrt(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{backward, no_grad};

    fn rand_feats(s: usize, d: usize, rng: &mut SeedRng) -> Tensor<f64> {
        Tensor::rand_uniform(vec![s, d], 1.0, rng)
    }

    #[test]
    fn singleton_attention_weight_is_one() {
        let mut rng = SeedRng::new(1);
        let dec = MaskDecoder::<f64>::new(8, 3, &mut rng);
        let q = rand_feats(1, 8, &mut rng);
        let sp = rand_feats(1, 8, &mut rng);
        let a = dec.attention_weights(0, &q, &sp).unwrap();
        assert_eq!(a.to_f64s(), vec![1.0]);
    }

    #[test]
    fn duplicate_rows_get_equal_logits() {
        let mut rng = SeedRng::new(2);
        let dec = MaskDecoder::<f64>::new(8, 3, &mut rng);
        let q = rand_feats(1, 8, &mut rng);
        let row = rand_feats(1, 8, &mut rng);
        let other = rand_feats(1, 8, &mut rng);
        let sp = ops::concat_rows(&[row.clone(), other, row]).unwrap();
        let logits = dec.decode_mask(&q, &sp).unwrap().to_f64s();
        assert_eq!(logits[0].to_bits(), logits[2].to_bits());
        assert_ne!(logits[0].to_bits(), logits[1].to_bits());
    }

    #[test]
    fn zero_layers_reduce_to_scaled_dot_product() {
        let mut rng = SeedRng::new(3);
        let dec = MaskDecoder::<f64>::new(4, 0, &mut rng);
        let q = Tensor::from_f64s(vec![1, 4], &[1.0, -2.0, 0.5, 3.0]);
        let sp = Tensor::from_f64s(vec![2, 4], &[2.0, 1.0, 0.0, -1.0, 0.5, 0.5, 0.5, 0.5]);
        let logits = dec.decode_mask(&q, &sp).unwrap().to_f64s();
        let expect0 = (1.0 * 2.0 - 2.0 * 1.0 + 0.0 - 3.0) / 2.0;
        let expect1 = (0.5 * (1.0 - 2.0 + 0.5 + 3.0)) / 2.0;
        assert!((logits[0] - expect0).abs() < 1e-12);
        assert!((logits[1] - expect1).abs() < 1e-12);
    }

    #[test]
    fn permuting_superpoints_permutes_logits() {
        let mut rng = SeedRng::new(4);
        let dec = MaskDecoder::<f64>::new(8, 3, &mut rng);
        let q = rand_feats(1, 8, &mut rng);
        let sp = rand_feats(5, 8, &mut rng);
        let logits = dec.decode_mask(&q, &sp).unwrap().to_f64s();

        let perm = [3usize, 0, 4, 1, 2];
        let d = 8;
        let data = sp.to_f64s();
        let mut permuted = Vec::new();
        for &i in &perm {
            permuted.extend_from_slice(&data[i * d..(i + 1) * d]);
        }
        let sp2 = Tensor::from_f64s(vec![5, 8], &permuted);
        let logits2 = dec.decode_mask(&q, &sp2).unwrap().to_f64s();
        for (j, &i) in perm.iter().enumerate() {
            assert!((logits2[j] - logits[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_queries_give_distinct_logits() {
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = SeedRng::new(100 + seed);
            let dec = MaskDecoder::<f64>::new(8, 3, &mut rng);
            let sp = rand_feats(6, 8, &mut rng);
            let q1 = rand_feats(1, 8, &mut rng);
            let q2 = rand_feats(1, 8, &mut rng);
            let l1 = dec.decode_mask(&q1, &sp).unwrap().to_f64s();
            let l2 = dec.decode_mask(&q2, &sp).unwrap().to_f64s();
            let diff = l1.iter().zip(&l2).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            if diff > 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "queries collapsed in {} of 20 seeds", 20 - hits);
    }

    #[test]
    fn gradients_flow_into_query_and_features() {
        let mut rng = SeedRng::new(5);
        let dec = MaskDecoder::<f64>::new(6, 2, &mut rng);
        let q = rand_feats(1, 6, &mut rng).requires_grad();
        let sp = rand_feats(4, 6, &mut rng).requires_grad();
        let logits = dec.decode_mask(&q, &sp).unwrap();
        backward(&ops::sum(&logits)).unwrap();
        assert!(q.grad().unwrap().iter().any(|&g| g != 0.0));
        assert!(sp.grad().unwrap().iter().any(|&g| g != 0.0));
        for (name, p) in dec.params() {
            assert!(p.grad().is_some(), "no grad on {name}");
        }
    }

    #[test]
    fn seg_query_projection_width_and_determinism() {
        let mut rng = SeedRng::new(6);
        let proj = MlpProjector::<f64>::new(16, 8, &mut rng);
        let h = rand_feats(1, 16, &mut rng);
        let a = no_grad(|| project_seg_query(&proj, &h)).unwrap();
        let b = no_grad(|| project_seg_query(&proj, &h)).unwrap();
        assert_eq!(a.shape(), &[1, 8]);
        assert_eq!(a.to_f64s(), b.to_f64s());
        let wide = rand_feats(2, 16, &mut rng);
        assert!(matches!(project_seg_query(&proj, &wide), Err(Error::Contract(_))));
    }
}
