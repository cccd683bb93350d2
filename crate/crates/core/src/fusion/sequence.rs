//! Interleaved per-object token sequences S_i = [O_i, F_i^p, F_i^v, L_i]
//! and full prompt assembly.

use crate::encoder::{ObjectFeatures, ObjectProposal};
use crate::error::{Error, Result};
use crate::language::{TrainingSequence, TransformerLm, Vocabulary};
use crate::numerics::ops;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::SeedRng;

use super::position::PositionEncoder;
use super::projector::MlpProjector;

#[derive(Debug, Clone, Copy)]
pub struct FusionFlags {
    pub use_2d: bool,
    pub use_identifiers: bool,
}

impl Default for FusionFlags {
    fn default() -> Self {
        FusionFlags { use_2d: true, use_identifiers: true }
    }
}

/// Trainable fusion stage: the two feature projectors plus the positional
/// encoder.
pub struct Fuser<T: Real> {
    pub proj3d: MlpProjector<T>,
    pub proj2d: MlpProjector<T>,
    pub pos: PositionEncoder<T>,
}

impl<T: Real> Fuser<T> {
    pub fn new(d3: usize, d2: usize, d_model: usize, rng: &mut SeedRng) -> Self {
        Fuser {
            proj3d: MlpProjector::new(d3, d_model, rng),
            proj2d: MlpProjector::new(d2, d_model, rng),
            pos: PositionEncoder::new(d_model, rng),
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.proj3d.params("proj3d");
        out.extend(self.proj2d.params("proj2d"));
        out.extend(self.pos.params());
        out
    }
}

/// One object's tokens in embedding space; `identifier` absent when the
/// identifier ablation is on, `f2d` absent when the 2D path is off.
pub struct FusedObjectTokens<T: Real> {
    pub instance_id: u32,
    pub identifier: Option<Tensor<T>>,
    pub f3d: Tensor<T>,
    pub f2d: Option<Tensor<T>>,
    pub position: Tensor<T>,
}

impl<T: Real> FusedObjectTokens<T> {
    pub fn num_tokens(&self) -> usize {
        1 + usize::from(self.identifier.is_some()) + usize::from(self.f2d.is_some()) + 1
    }

    /// Rows in the fixed order [O_i, F_i^p, F_i^v, L_i].
    pub fn sequence(&self) -> Result<Tensor<T>> {
        let mut rows: Vec<Tensor<T>> = Vec::with_capacity(4);
        if let Some(o) = &self.identifier {
            rows.push(o.clone());
        }
        rows.push(self.f3d.clone());
        if let Some(v) = &self.f2d {
            rows.push(v.clone());
        }
        rows.push(self.position.clone());
        ops::concat_rows(&rows)
    }
}

pub fn fuse_object<T: Real>(
    obj: &ObjectProposal,
    feats: &ObjectFeatures<T>,
    lm: &TransformerLm<T>,
    vocab: &Vocabulary,
    fuser: &Fuser<T>,
    lo: [f64; 3],
    hi: [f64; 3],
    flags: &FusionFlags,
) -> Result<FusedObjectTokens<T>> {
    if flags.use_2d != feats.f2d_raw.is_some() {
        return Err(Error::Contract(format!(
            "instance {}: 2D features {} but flag says {}",
            obj.instance_id,
            if feats.f2d_raw.is_some() { "present" } else { "absent" },
            if flags.use_2d { "enabled" } else { "disabled" },
        )));
    }
    let identifier = if flags.use_identifiers {
        let id = vocab.obj_id(obj.instance_id).ok_or_else(|| {
            Error::Vocabulary(format!("no identifier token for instance {}", obj.instance_id))
        })?;
        Some(lm.embed(&[id])?)
    } else {
        None
    };
    let f3d = fuser.proj3d.project(&feats.f3d_raw)?;
    let f2d = match &feats.f2d_raw {
        Some(raw) => Some(fuser.proj2d.project(raw)?),
        None => None,
    };
    let position = fuser.pos.encode(obj, lo, hi)?;
    Ok(FusedObjectTokens { instance_id: obj.instance_id, identifier, f3d, f2d, position })
}

/// Concatenation of S_1 … S_m in ascending instance-id order.
pub fn build_interleaved_sequence<T: Real>(
    items: &[(ObjectProposal, ObjectFeatures<T>)],
    lm: &TransformerLm<T>,
    vocab: &Vocabulary,
    fuser: &Fuser<T>,
    lo: [f64; 3],
    hi: [f64; 3],
    flags: &FusionFlags,
) -> Result<Tensor<T>> {
    if items.is_empty() {
        return Err(Error::Contract("build_interleaved_sequence: no objects".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| items[i].0.instance_id);
    let mut blocks = Vec::with_capacity(items.len());
    for &i in &order {
        let (obj, feats) = &items[i];
        blocks.push(fuse_object(obj, feats, lm, vocab, fuser, lo, hi, flags)?.sequence()?);
    }
    ops::concat_rows(&blocks)
}

/// Assembled prompt embeddings plus the teacher-forcing layout.
pub struct PromptLayout<T: Real> {
    pub emb: Tensor<T>,
    pub prefix_len: usize,
    /// Present only when a response was supplied.
    pub seq: Option<TrainingSequence>,
    /// Absolute positions of `<OBJi>` tokens inside the response span.
    pub obj_positions: Vec<(u32, usize)>,
}

/// `<user>` + instruction + `<scene>` + fused tokens + `<assistant>`
/// [+ response + end-of-sequence]. The end-of-sequence token is appended
/// here; `response_ids` must not contain it.
pub fn assemble_prompt<T: Real>(
    lm: &TransformerLm<T>,
    vocab: &Vocabulary,
    instruction_ids: &[usize],
    fused: &Tensor<T>,
    response_ids: Option<&[usize]>,
) -> Result<PromptLayout<T>> {
    let mut head_ids = Vec::with_capacity(instruction_ids.len() + 2);
    head_ids.push(vocab.user_id());
    head_ids.extend_from_slice(instruction_ids);
    head_ids.push(vocab.scene_id());
    let head = lm.embed(&head_ids)?;
    let tail = lm.embed(&[vocab.assistant_id()])?;
    let prefix_len = head_ids.len() + fused.rows() + 1;

    let mut parts = vec![head, fused.clone(), tail];
    let mut seq = None;
    let mut obj_positions = Vec::new();
    let mut total_len = prefix_len;
    if let Some(resp) = response_ids {
        let mut resp_ids = resp.to_vec();
        resp_ids.push(vocab.eos_id());
        parts.push(lm.embed(&resp_ids)?);
        total_len += resp_ids.len();
        let mut seg_position = None;
        for (i, &id) in resp_ids.iter().enumerate() {
            if Some(id) == vocab.seg_id() && seg_position.is_none() {
                seg_position = Some(prefix_len + i);
            }
            if let Some(tok) = vocab.token(id) {
                if let Some(num) = tok.strip_prefix("<OBJ").and_then(|s| s.strip_suffix('>')) {
                    if let Ok(n) = num.parse::<u32>() {
                        obj_positions.push((n, prefix_len + i));
                    }
                }
            }
        }
        let s = TrainingSequence { total_len, prefix_len, response_ids: resp_ids, seg_position };
        s.validate()?;
        seq = Some(s);
    }
    if total_len > lm.cfg.max_len {
        return Err(Error::Length { got: total_len, max: lm.cfg.max_len });
    }
    let emb = ops::concat_rows(&parts)?;
    Ok(PromptLayout { emb, prefix_len, seq, obj_positions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::{grammar_vocabulary, LmConfig};
    use crate::numerics::backward;

    fn setup(
        n_obj: usize,
    ) -> (TransformerLm<f64>, Vocabulary, Fuser<f64>, Vec<(ObjectProposal, ObjectFeatures<f64>)>)
    {
        let mut vocab = grammar_vocabulary();
        let base_len = vocab.base_len();
        vocab.extend(9);
        let mut rng = SeedRng::new(7);
        let mut cfg = LmConfig::toy(vocab.len());
        cfg.layers = 1;
        cfg.d_model = 16;
        cfg.heads = 2;
        cfg.d_ff = 32;
        let lm = TransformerLm::new(cfg, base_len, &mut rng).unwrap();
        let fuser = Fuser::new(6, 5, 16, &mut rng);
        let mut items = Vec::new();
        for i in 0..n_obj {
            let obj = ObjectProposal {
                instance_id: (n_obj - i) as u32, // reverse order on purpose
                positions: vec![[i as f64, 0.0, 0.0]],
                colors: vec![[0.5; 3]],
                center: [i as f64, 0.0, 0.0],
                extents: [0.2; 3],
            };
            let feats = ObjectFeatures {
                f3d_raw: Tensor::rand_uniform(vec![1, 6], 1.0, &mut rng),
                f2d_raw: Some(Tensor::rand_uniform(vec![1, 5], 1.0, &mut rng)),
            };
            items.push((obj, feats));
        }
        (lm, vocab, fuser, items)
    }

    const LO: [f64; 3] = [-1.0, -1.0, -1.0];
    const HI: [f64; 3] = [4.0, 4.0, 4.0];

    #[test]
    fn both_flags_on_gives_4m_rows() {
        let (lm, vocab, fuser, items) = setup(3);
        let s = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        assert_eq!(s.shape(), &[12, 16]);
    }

    #[test]
    fn two_d_off_gives_3m_rows() {
        let (lm, vocab, fuser, mut items) = setup(3);
        for (_, f) in items.iter_mut() {
            f.f2d_raw = None;
        }
        let flags = FusionFlags { use_2d: false, use_identifiers: true };
        let s = build_interleaved_sequence(&items, &lm, &vocab, &fuser, LO, HI, &flags).unwrap();
        assert_eq!(s.shape(), &[9, 16]);
    }

    #[test]
    fn flag_feature_mismatch_is_error() {
        let (lm, vocab, fuser, items) = setup(1);
        let flags = FusionFlags { use_2d: false, use_identifiers: true };
        assert!(matches!(
            build_interleaved_sequence(&items, &lm, &vocab, &fuser, LO, HI, &flags),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn first_row_is_identifier_embedding_of_lowest_id() {
        let (lm, vocab, fuser, items) = setup(3);
        let s = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        // lowest instance id in `setup` is 1
        let id = vocab.obj_id(1).unwrap();
        let row0: Vec<f64> = s.to_f64s()[..16].to_vec();
        assert_eq!(row0, lm.embed(&[id]).unwrap().to_f64s());
    }

    #[test]
    fn stride_reconstruction_matches_components() {
        let (lm, vocab, fuser, items) = setup(2);
        let flags = FusionFlags::default();
        let s =
            build_interleaved_sequence(&items, &lm, &vocab, &fuser, LO, HI, &flags).unwrap();
        let data = s.to_f64s();
        let d = 16;
        let mut order: Vec<&(ObjectProposal, ObjectFeatures<f64>)> = items.iter().collect();
        order.sort_by_key(|(o, _)| o.instance_id);
        for (i, (obj, feats)) in order.iter().enumerate() {
            let fused = fuse_object(obj, feats, &lm, &vocab, &fuser, LO, HI, &flags).unwrap();
            let expect = [
                fused.identifier.unwrap().to_f64s(),
                fused.f3d.to_f64s(),
                fused.f2d.unwrap().to_f64s(),
                fused.position.to_f64s(),
            ];
            for (t, row) in expect.iter().enumerate() {
                let base = (4 * i + t) * d;
                assert_eq!(&data[base..base + d], row.as_slice(), "object {i} token {t}");
            }
        }
    }

    #[test]
    fn identifier_ablation_omits_rows() {
        let (lm, vocab, fuser, items) = setup(2);
        let flags = FusionFlags { use_2d: true, use_identifiers: false };
        let s = build_interleaved_sequence(&items, &lm, &vocab, &fuser, LO, HI, &flags).unwrap();
        assert_eq!(s.rows(), 6);
    }

    #[test]
    fn gradients_reach_projectors_and_identifier_embeddings() {
        let (lm, vocab, fuser, items) = setup(2);
        let s = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        let loss = ops::sum(&s);
        backward(&loss).unwrap();
        for (name, p) in fuser.params() {
            let g = p.grad().expect("grad populated");
            assert!(g.iter().any(|&v| v != 0.0), "zero grad on {name}");
        }
        let emb_special = lm
            .params()
            .into_iter()
            .find(|(n, _)| n == "lm.emb_special")
            .map(|(_, t)| t)
            .unwrap();
        let g = emb_special.grad().expect("identifier embedding grad");
        assert!(g.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn prompt_prefix_arithmetic_and_layout() {
        let (lm, vocab, fuser, items) = setup(2);
        let fused = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        let instr = vocab.tokenize("Segment the red box.");
        let resp = vocab.tokenize("It is <OBJ2>. <SEG>");
        let layout =
            assemble_prompt(&lm, &vocab, &instr, &fused, Some(&resp)).unwrap();
        let prefix = 1 + instr.len() + 1 + fused.rows() + 1;
        assert_eq!(layout.prefix_len, prefix);
        let seq = layout.seq.unwrap();
        assert_eq!(seq.total_len, prefix + resp.len() + 1);
        assert_eq!(layout.emb.rows(), seq.total_len);
        // response tokens: It is <OBJ2> . <SEG> — seg at offset 4, obj at 2
        assert_eq!(seq.seg_position, Some(prefix + 4));
        assert_eq!(layout.obj_positions, vec![(2, prefix + 2)]);
    }

    #[test]
    fn empty_instruction_is_valid() {
        let (lm, vocab, fuser, items) = setup(1);
        let fused = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        let layout = assemble_prompt(&lm, &vocab, &[], &fused, None).unwrap();
        assert_eq!(layout.prefix_len, 2 + fused.rows() + 1);
        assert!(layout.seq.is_none());
    }

    #[test]
    fn overlong_prompt_reports_budget() {
        let (mut lm, vocab, fuser, items) = setup(1);
        lm.cfg.max_len = 8;
        let fused = build_interleaved_sequence(
            &items,
            &lm,
            &vocab,
            &fuser,
            LO,
            HI,
            &FusionFlags::default(),
        )
        .unwrap();
        let instr = vocab.tokenize("Segment the red box please now.");
        match assemble_prompt(&lm, &vocab, &instr, &fused, None) {
            Err(Error::Length { max, .. }) => assert_eq!(max, 8),
            other => panic!("expected Length error, got {:?}", other.map(|_| ())),
        }
    }
}
