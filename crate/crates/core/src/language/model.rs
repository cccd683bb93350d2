//! Tiny causal transformer with pre-layer-norm blocks, optional LoRA on the
//! attention query/value projections, and a base/special split of the
//! embedding and output-head tables so special-token rows can train while
//! the base rows stay frozen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::lora::LoraAdapter;
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::{no_grad, Tensor};
use crate::numerics::SeedRng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    /// 0 disables LoRA.
    pub lora_rank: usize,
    pub lora_alpha: f64,
}

impl LmConfig {
    pub fn toy(vocab_size: usize) -> Self {
        LmConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            max_len: 512,
            vocab_size,
            lora_rank: 4,
            lora_alpha: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.heads != 0 {
            return Err(Error::Contract(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }
}

/// Layout of one teacher-forced sample: prefix (system/user/scene tokens)
/// followed by the response span.
#[derive(Debug, Clone)]
pub struct TrainingSequence {
    pub total_len: usize,
    pub prefix_len: usize,
    /// Response token ids including the end-of-sequence token; `k ≥ 1`.
    pub response_ids: Vec<usize>,
    /// Absolute position of the first `<SEG>` token, if any.
    pub seg_position: Option<usize>,
}

impl TrainingSequence {
    pub fn validate(&self) -> Result<()> {
        if self.response_ids.is_empty() {
            return Err(Error::Degenerate("training sequence with empty response".into()));
        }
        if self.prefix_len == 0 || self.prefix_len + self.response_ids.len() != self.total_len {
            return Err(Error::Contract(format!(
                "sequence layout: prefix {} + response {} != total {}",
                self.prefix_len,
                self.response_ids.len(),
                self.total_len
            )));
        }
        Ok(())
    }
}

struct Block<T: Real> {
    ln1_g: Tensor<T>,
    ln1_b: Tensor<T>,
    wq: Tensor<T>,
    wk: Tensor<T>,
    wv: Tensor<T>,
    wo: Tensor<T>,
    lora_q: Option<LoraAdapter<T>>,
    lora_v: Option<LoraAdapter<T>>,
    ln2_g: Tensor<T>,
    ln2_b: Tensor<T>,
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
}

fn ones<T: Real>(n: usize) -> Tensor<T> {
    Tensor::from_vec(vec![n], vec![T::one(); n])
}

impl<T: Real> Block<T> {
    fn new(cfg: &LmConfig, rng: &mut SeedRng) -> Self {
        let d = cfg.d_model;
        let bound = 1.0 / (d as f64).sqrt();
        let lora = |rng: &mut SeedRng| {
            (cfg.lora_rank > 0)
                .then(|| LoraAdapter::new(d, d, cfg.lora_rank, cfg.lora_alpha, rng))
        };
        Block {
            ln1_g: ones::<T>(d).requires_grad(),
            ln1_b: Tensor::zeros(vec![d]).requires_grad(),
            wq: Tensor::rand_uniform(vec![d, d], bound, rng).requires_grad(),
            wk: Tensor::rand_uniform(vec![d, d], bound, rng).requires_grad(),
            wv: Tensor::rand_uniform(vec![d, d], bound, rng).requires_grad(),
            wo: Tensor::rand_uniform(vec![d, d], bound, rng).requires_grad(),
            lora_q: lora(rng),
            lora_v: lora(rng),
            ln2_g: ones::<T>(d).requires_grad(),
            ln2_b: Tensor::zeros(vec![d]).requires_grad(),
            w1: Tensor::rand_uniform(vec![d, cfg.d_ff], bound, rng).requires_grad(),
            b1: Tensor::zeros(vec![cfg.d_ff]).requires_grad(),
            w2: Tensor::rand_uniform(vec![cfg.d_ff, d], 1.0 / (cfg.d_ff as f64).sqrt(), rng)
                .requires_grad(),
            b2: Tensor::zeros(vec![d]).requires_grad(),
        }
    }
}

pub struct LmOutput<T: Real> {
    pub logits: Tensor<T>,
    pub hidden: Tensor<T>,
}

pub struct TransformerLm<T: Real> {
    pub cfg: LmConfig,
    base_len: usize,
    emb_base: Tensor<T>,
    emb_special: Tensor<T>,
    pos: Tensor<T>,
    blocks: Vec<Block<T>>,
    lnf_g: Tensor<T>,
    lnf_b: Tensor<T>,
    head_base: Tensor<T>,
    head_special: Tensor<T>,
}

impl<T: Real> TransformerLm<T> {
    /// First special id: rows below are "base" vocabulary.
    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn new(cfg: LmConfig, base_len: usize, rng: &mut SeedRng) -> Result<Self> {
        cfg.validate()?;
        if base_len > cfg.vocab_size {
            return Err(Error::Contract(format!(
                "base length {base_len} exceeds vocabulary {}",
                cfg.vocab_size
            )));
        }
        let d = cfg.d_model;
        let n_special = cfg.vocab_size - base_len;
        let emb_scale = 0.08;
        let blocks = (0..cfg.layers).map(|_| Block::new(&cfg, rng)).collect();
        Ok(TransformerLm {
            base_len,
            emb_base: Tensor::rand_uniform(vec![base_len, d], emb_scale, rng).requires_grad(),
            emb_special: Tensor::rand_uniform(vec![n_special, d], emb_scale, rng).requires_grad(),
            pos: Tensor::rand_uniform(vec![cfg.max_len, d], emb_scale, rng).requires_grad(),
            blocks,
            lnf_g: ones::<T>(d).requires_grad(),
            lnf_b: Tensor::zeros(vec![d]).requires_grad(),
            head_base: Tensor::rand_uniform(vec![d, base_len], 1.0 / (d as f64).sqrt(), rng)
                .requires_grad(),
            head_special: Tensor::rand_uniform(
                vec![d, cfg.vocab_size - base_len],
                1.0 / (d as f64).sqrt(),
                rng,
            )
            .requires_grad(),
            cfg,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    /// Full embedding table `[V×d]` (base rows then special rows).
    pub fn embedding_table(&self) -> Result<Tensor<T>> {
        ops::concat_rows(&[self.emb_base.clone(), self.emb_special.clone()])
    }

    fn head(&self) -> Result<Tensor<T>> {
        ops::concat_cols(&[self.head_base.clone(), self.head_special.clone()])
    }

    pub fn embed(&self, ids: &[usize]) -> Result<Tensor<T>> {
        ops::embedding(&self.embedding_table()?, ids)
    }

    /// Append `n_new` special rows (embedding + head) with small random
    /// init. Existing rows are copied bit-identically.
    pub fn extend_special_rows(&mut self, n_new: usize, rng: &mut SeedRng) {
        let d = self.cfg.d_model;
        let old = self.emb_special.clone();
        let mut data = old.data().clone();
        for _ in 0..n_new * d {
            data.push(T::lit(rng.uniform(-0.08, 0.08)));
        }
        self.emb_special =
            Tensor::from_vec(vec![old.rows() + n_new, d], data).requires_grad();

        let oldh = self.head_special.clone();
        let (rows, cols) = (oldh.rows(), oldh.cols());
        let mut data = vec![T::zero(); rows * (cols + n_new)];
        {
            let od = oldh.data();
            for r in 0..rows {
                data[r * (cols + n_new)..r * (cols + n_new) + cols]
                    .copy_from_slice(&od[r * cols..(r + 1) * cols]);
                for c in 0..n_new {
                    data[r * (cols + n_new) + cols + c] =
                        T::lit(rng.uniform(-1.0, 1.0) / (d as f64).sqrt());
                }
            }
        }
        self.head_special = Tensor::from_vec(vec![rows, cols + n_new], data).requires_grad();
        self.cfg.vocab_size += n_new;
    }

    fn causal_mask(t: usize) -> Tensor<T> {
        let mut data = vec![T::zero(); t * t];
        let ninf = T::lit(-1e30);
        for i in 0..t {
            for j in (i + 1)..t {
                data[i * t + j] = ninf;
            }
        }
        Tensor::from_vec(vec![t, t], data)
    }

    fn attention(&self, block: &Block<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = x.rows();
        let d = self.cfg.d_model;
        let dh = d / self.cfg.heads;
        let mut q = ops::matmul(x, &block.wq)?;
        if let Some(l) = &block.lora_q {
            q = ops::add(&q, &l.apply(x)?)?;
        }
        let k = ops::matmul(x, &block.wk)?;
        let mut v = ops::matmul(x, &block.wv)?;
        if let Some(l) = &block.lora_v {
            v = ops::add(&v, &l.apply(x)?)?;
        }
        let mask = Self::causal_mask(t);
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let qh = ops::slice_cols(&q, c0, c1)?;
            let kh = ops::slice_cols(&k, c0, c1)?;
            let vh = ops::slice_cols(&v, c0, c1)?;
            let scores = ops::scale(
                &ops::matmul(&qh, &ops::transpose(&kh))?,
                1.0 / (dh as f64).sqrt(),
            );
            let attn = ops::softmax(&ops::add(&scores, &mask)?, 1)?;
            heads.push(ops::matmul(&attn, &vh)?);
        }
        ops::matmul(&ops::concat_cols(&heads)?, &block.wo)
    }

    /// Causal forward over already-assembled input embeddings `[t×d]`.
    /// `hidden` is the last-layer state after the final layer norm.
    pub fn forward(&self, emb: &Tensor<T>) -> Result<LmOutput<T>> {
        let t = emb.rows();
        if t > self.cfg.max_len {
            return Err(Error::Length { got: t, max: self.cfg.max_len });
        }
        if emb.cols() != self.cfg.d_model {
            return Err(Error::Shape(format!(
                "lm_forward: input width {} vs d_model {}",
                emb.cols(),
                self.cfg.d_model
            )));
        }
        let pos = ops::slice_rows(&self.pos, 0, t)?;
        let mut x = ops::add(emb, &pos)?;
        for block in &self.blocks {
            let normed = ops::layer_norm(&x, &block.ln1_g, &block.ln1_b, LAYER_NORM_EPS)?;
            x = ops::add(&x, &self.attention(block, &normed)?)?;
            let normed = ops::layer_norm(&x, &block.ln2_g, &block.ln2_b, LAYER_NORM_EPS)?;
            let h = ops::gelu(&ops::add_bias(&ops::matmul(&normed, &block.w1)?, &block.b1)?);
            let ff = ops::add_bias(&ops::matmul(&h, &block.w2)?, &block.b2)?;
            x = ops::add(&x, &ff)?;
        }
        let hidden = ops::layer_norm(&x, &self.lnf_g, &self.lnf_b, LAYER_NORM_EPS)?;
        let logits = ops::matmul(&hidden, &self.head()?)?;
        Ok(LmOutput { logits, hidden })
    }

    /// Greedy decoding from prompt embeddings until `eos` or `max_new`.
    pub fn generate(&self, prompt_emb: &Tensor<T>, max_new: usize, eos: usize) -> Result<Vec<usize>> {
        no_grad(|| {
            let mut emb = prompt_emb.clone();
            let mut out = Vec::new();
            for _ in 0..max_new {
                if emb.rows() >= self.cfg.max_len {
                    break;
                }
                let logits = self.forward(&emb)?.logits;
                let v = logits.cols();
                let last = &logits.data()[(logits.rows() - 1) * v..];
                let mut best = 0;
                for j in 1..v {
                    if last[j] > last[best] {
                        best = j;
                    }
                }
                out.push(best);
                if best == eos {
                    break;
                }
                emb = ops::concat_rows(&[emb.clone(), self.embed(&[best])?])?;
            }
            Ok(out)
        })
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut p: Vec<(String, Tensor<T>)> = vec![
            ("lm.emb_base".into(), self.emb_base.clone()),
            ("lm.emb_special".into(), self.emb_special.clone()),
            ("lm.pos".into(), self.pos.clone()),
            ("lm.lnf.g".into(), self.lnf_g.clone()),
            ("lm.lnf.b".into(), self.lnf_b.clone()),
            ("lm.head_base".into(), self.head_base.clone()),
            ("lm.head_special".into(), self.head_special.clone()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let mut push = |suffix: &str, t: &Tensor<T>| {
                p.push((format!("lm.layer{i}.{suffix}"), t.clone()));
            };
            push("ln1.g", &b.ln1_g);
            push("ln1.b", &b.ln1_b);
            push("wq", &b.wq);
            push("wk", &b.wk);
            push("wv", &b.wv);
            push("wo", &b.wo);
            push("ln2.g", &b.ln2_g);
            push("ln2.b", &b.ln2_b);
            push("ffn.w1", &b.w1);
            push("ffn.b1", &b.b1);
            push("ffn.w2", &b.w2);
            push("ffn.b2", &b.b2);
            if let Some(l) = &b.lora_q {
                push("lora_q.down", &l.down);
                push("lora_q.up", &l.up);
            }
            if let Some(l) = &b.lora_v {
                push("lora_v.down", &l.down);
                push("lora_v.up", &l.up);
            }
        }
        p
    }

    /// Trainable subset. `freeze_base` freezes the transformer block weights
    /// (attention and FFN matrices train only through their LoRA adapters);
    /// the token embeddings and the output head stay trainable either way so
    /// the model can fit base-word response tokens. Without `freeze_base`
    /// every parameter trains.
    pub fn trainable_params(&self, freeze_base: bool) -> Vec<(String, Tensor<T>)> {
        if !freeze_base {
            return self.params();
        }
        self.params()
            .into_iter()
            .filter(|(name, _)| {
                name.contains("lora_")
                    || name.contains("emb_")
                    || name.contains("head_")
                    || name.contains("lnf")
            })
            .collect()
    }
}

/// Cross-entropy over response positions only, normalized by the response
/// length `k`: position `i` (0-based) predicts token `i+1`, so the masked
/// logit rows are `prefix_len-1 .. total_len-1`.
pub fn llm_loss<T: Real>(logits: &Tensor<T>, seq: &TrainingSequence) -> Result<Tensor<T>> {
    seq.validate()?;
    let t = logits.rows();
    if t != seq.total_len {
        return Err(Error::Shape(format!(
            "llm_loss: {} logit rows vs sequence length {}",
            t, seq.total_len
        )));
    }
    let mut targets = vec![0usize; t];
    let mut mask = vec![false; t];
    for (j, &tok) in seq.response_ids.iter().enumerate() {
        let pos = seq.prefix_len - 1 + j;
        targets[pos] = tok;
        mask[pos] = true;
    }
    ops::cross_entropy_logits(logits, &targets, &mask)
}

/// Last-layer hidden state at the (first) `<SEG>` position, kept
/// differentiable as a `[1×d]` slice.
pub fn extract_seg_embedding<T: Real>(
    hidden: &Tensor<T>,
    seg_position: usize,
) -> Result<Tensor<T>> {
    if seg_position >= hidden.rows() {
        return Err(Error::Contract(format!(
            "seg position {seg_position} outside sequence of {}",
            hidden.rows()
        )));
    }
    ops::slice_rows(hidden, seg_position, seg_position + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_check, DEFAULT_EPS, DEFAULT_TOL};

    fn tiny_cfg(v: usize, rank: usize) -> LmConfig {
        LmConfig {
            layers: 2,
            heads: 2,
            d_model: 16,
            d_ff: 24,
            max_len: 32,
            vocab_size: v,
            lora_rank: rank,
            lora_alpha: 8.0,
        }
    }

    fn tiny_lm(rank: usize, seed: u64) -> TransformerLm<f64> {
        let mut rng = SeedRng::new(seed);
        TransformerLm::new(tiny_cfg(12, rank), 8, &mut rng).unwrap()
    }

    #[test]
    fn causality_later_tokens_do_not_affect_earlier_logits() {
        let lm = tiny_lm(0, 3);
        let ids = [1usize, 2, 3, 4, 5];
        let emb = lm.embed(&ids).unwrap();
        let base = lm.forward(&emb).unwrap().logits.to_f64s();

        let mut ids2 = ids;
        ids2[3] = 7; // perturb token 3
        let emb2 = lm.embed(&ids2).unwrap();
        let changed = lm.forward(&emb2).unwrap().logits.to_f64s();

        let v = lm.vocab_size();
        for pos in 0..3 {
            for j in 0..v {
                assert_eq!(
                    base[pos * v + j].to_bits(),
                    changed[pos * v + j].to_bits(),
                    "position {pos} logit {j} changed"
                );
            }
        }
        assert_ne!(base[3 * v..4 * v], changed[3 * v..4 * v]);
    }

    #[test]
    fn zero_initialized_lora_matches_base_exactly() {
        // same seed stream must produce the same base weights with and
        // without adapters, so draw the adapters from a split stream
        let mut rng = SeedRng::new(5);
        let lm_with = TransformerLm::<f64>::new(tiny_cfg(12, 3), 8, &mut rng).unwrap();
        let ids = [0usize, 4, 9, 2];
        let emb = lm_with.embed(&ids).unwrap();
        let with = lm_with.forward(&emb).unwrap().logits.to_f64s();

        // strip the adapters off the very same model
        let mut lm_base = lm_with;
        for b in &mut lm_base.blocks {
            b.lora_q = None;
            b.lora_v = None;
        }
        let base = lm_base.forward(&lm_base.embed(&ids).unwrap()).unwrap().logits.to_f64s();
        for (a, b) in with.iter().zip(base) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn overlong_input_is_length_error() {
        let lm = tiny_lm(0, 7);
        let ids: Vec<usize> = (0..33).map(|i| i % 12).collect();
        let emb = lm.embed(&ids).unwrap();
        assert!(matches!(lm.forward(&emb), Err(Error::Length { .. })));
    }

    #[test]
    fn gradient_through_two_layer_model_passes_finite_difference() {
        let lm = tiny_lm(2, 11);
        let ids = [1usize, 5, 8, 3];
        let seq = TrainingSequence {
            total_len: 4,
            prefix_len: 2,
            response_ids: vec![8, 3],
            seg_position: None,
        };
        // spot-check a representative subset of parameters
        let named = lm.params();
        let pick = |n: &str| {
            named
                .iter()
                .find(|(name, _)| name == n)
                .unwrap_or_else(|| panic!("missing {n}"))
                .1
                .clone()
        };
        let params = [
            pick("lm.layer0.wq"),
            pick("lm.layer1.ffn.w2"),
            pick("lm.layer0.lora_q.up"),
            pick("lm.layer1.ln1.g"),
            pick("lm.emb_special"),
            pick("lm.head_base"),
            pick("lm.pos"),
        ];
        let err = finite_diff_check(
            &params,
            &move || {
                let emb = lm.embed(&ids)?;
                let out = lm.forward(&emb)?;
                llm_loss(&out.logits, &seq)
            },
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < DEFAULT_TOL, "relative error {err:.3e}");
    }

    #[test]
    fn llm_loss_uniform_logits_is_ln_v() {
        let logits = Tensor::<f64>::zeros(vec![5, 12]);
        let seq = TrainingSequence {
            total_len: 5,
            prefix_len: 3,
            response_ids: vec![1, 2],
            seg_position: None,
        };
        let loss = llm_loss(&logits, &seq).unwrap();
        assert!((loss.item() - 12.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn llm_loss_ignores_prefix_positions() {
        let mut rng = SeedRng::new(9);
        let logits = Tensor::<f64>::rand_uniform(vec![6, 10], 2.0, &mut rng);
        let seq = TrainingSequence {
            total_len: 6,
            prefix_len: 4,
            response_ids: vec![7, 1],
            seg_position: None,
        };
        let a = llm_loss(&logits, &seq).unwrap().item();
        // perturbing logits at pure-prefix rows (0..prefix_len-1) changes nothing
        let mut data = logits.to_f64s();
        for x in data[..3 * 10].iter_mut() {
            *x += 5.0;
        }
        let logits2 = Tensor::<f64>::from_f64s(vec![6, 10], &data);
        let b = llm_loss(&logits2, &seq).unwrap().item();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn llm_loss_matches_hand_summed_nll() {
        let mut rng = SeedRng::new(13);
        let logits = Tensor::<f64>::rand_uniform(vec![6, 7], 1.5, &mut rng);
        let seq = TrainingSequence {
            total_len: 6,
            prefix_len: 2,
            response_ids: vec![3, 0, 6, 2],
            seg_position: None,
        };
        let loss = llm_loss(&logits, &seq).unwrap().item();
        let ld = logits.to_f64s();
        let mut nll = 0.0;
        for (j, &tok) in seq.response_ids.iter().enumerate() {
            let row = &ld[(1 + j) * 7..(2 + j) * 7];
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            nll += -(row[tok].exp() / z).ln();
        }
        assert!((loss - nll / 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_response_is_degenerate() {
        let logits = Tensor::<f64>::zeros(vec![3, 5]);
        let seq =
            TrainingSequence { total_len: 3, prefix_len: 3, response_ids: vec![], seg_position: None };
        assert!(matches!(llm_loss(&logits, &seq), Err(Error::Degenerate(_))));
    }

    #[test]
    fn generation_is_greedy_and_deterministic() {
        let lm = tiny_lm(2, 21);
        let prompt = lm.embed(&[1, 2, 3]).unwrap();
        let a = lm.generate(&prompt, 6, 11).unwrap();
        let b = lm.generate(&prompt, 6, 11).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty() && a.len() <= 6);
        // each emitted token is the argmax of its step's logits
        let mut emb = prompt;
        for &tok in &a {
            let logits = lm.forward(&emb).unwrap().logits;
            let v = logits.cols();
            let last = logits.to_f64s()[(logits.rows() - 1) * v..].to_vec();
            let argmax = (0..v).max_by(|&i, &j| last[i].partial_cmp(&last[j]).unwrap()).unwrap();
            assert_eq!(tok, argmax);
            emb = ops::concat_rows(&[emb.clone(), lm.embed(&[tok]).unwrap()]).unwrap();
        }
    }

    #[test]
    fn seg_embedding_is_the_indexed_hidden_row() {
        let mut rng = SeedRng::new(2);
        let hidden = Tensor::<f64>::rand_uniform(vec![7, 4], 1.0, &mut rng);
        let h = extract_seg_embedding(&hidden, 5).unwrap();
        assert_eq!(h.to_f64s(), hidden.to_f64s()[5 * 4..6 * 4].to_vec());
        assert!(extract_seg_embedding(&hidden, 7).is_err());
    }

    #[test]
    fn extend_special_rows_preserves_old_rows_bitwise() {
        let mut lm = tiny_lm(0, 31);
        let old_emb = lm.emb_special.to_f64s();
        let old_head = lm.head_special.to_f64s();
        let old_cols = lm.head_special.cols();
        let mut rng = SeedRng::new(99);
        lm.extend_special_rows(3, &mut rng);
        assert_eq!(lm.vocab_size(), 15);
        let new_emb = lm.emb_special.to_f64s();
        for (i, v) in old_emb.iter().enumerate() {
            assert_eq!(v.to_bits(), new_emb[i].to_bits());
        }
        let new_head = lm.head_special.to_f64s();
        let new_cols = lm.head_special.cols();
        for r in 0..lm.head_special.rows() {
            for c in 0..old_cols {
                assert_eq!(
                    old_head[r * old_cols + c].to_bits(),
                    new_head[r * new_cols + c].to_bits()
                );
            }
        }
    }
}
