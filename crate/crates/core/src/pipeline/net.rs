//! The full model: point encoder, object feature providers, fusion stage,
//! language model, seg-query projector, and mask decoder, plus checkpoint
//! save/load with vocabulary and config sidecars.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::encoder::{
    extract_object_features_2d, extract_object_features_3d, ObjectFeatures, PointEncoder,
    PointSetEncoder3d, RandomProjection2d,
};
use crate::error::{Error, Result};
use crate::fusion::{assemble_prompt, build_interleaved_sequence, FusionFlags, Fuser, MlpProjector, PromptLayout};
use crate::language::{grammar_vocabulary, TransformerLm, Vocabulary};
use crate::maskdecoder::MaskDecoder;
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::{checkpoint, SeedRng};

use super::config::RunConfig;
use super::data::SceneEntry;

pub struct Segmenter<T: Real> {
    pub cfg: RunConfig,
    pub vocab: Vocabulary,
    pub lm: TransformerLm<T>,
    pub point_encoder: PointEncoder<T>,
    pub obj3d: PointSetEncoder3d<T>,
    pub view_provider: RandomProjection2d<T>,
    pub fuser: Fuser<T>,
    pub seg_proj: MlpProjector<T>,
    pub decoder: MaskDecoder<T>,
}

pub fn vocab_sidecar(ckpt: &Path) -> PathBuf {
    let mut p = ckpt.as_os_str().to_owned();
    p.push(".vocab.json");
    PathBuf::from(p)
}

pub fn config_sidecar(ckpt: &Path) -> PathBuf {
    let mut p = ckpt.as_os_str().to_owned();
    p.push(".config.json");
    PathBuf::from(p)
}

impl<T: Real> Segmenter<T> {
    /// Fresh model; all parameter init is a pure function of `cfg.seed`.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut vocab = grammar_vocabulary();
        let base_len = vocab.base_len();
        vocab.extend(cfg.max_objects);
        let mut rng = SeedRng::new(cfg.seed);
        let lm = TransformerLm::new(cfg.lm_config(vocab.len()), base_len, &mut rng)?;
        let point_encoder = PointEncoder::new(cfg.encoder_hidden, cfg.d_dec, &mut rng);
        let obj3d = PointSetEncoder3d::new(cfg.encoder_hidden, cfg.d3, &mut rng);
        let view_provider = RandomProjection2d::new(cfg.d2, cfg.view_feature_seed);
        let fuser = Fuser::new(cfg.d3, cfg.d2, cfg.lm_d_model, &mut rng);
        let seg_proj = MlpProjector::new(cfg.lm_d_model, cfg.d_dec, &mut rng);
        let decoder = MaskDecoder::new(cfg.d_dec, cfg.decoder_layers, &mut rng);
        Ok(Segmenter {
            cfg,
            vocab,
            lm,
            point_encoder,
            obj3d,
            view_provider,
            fuser,
            seg_proj,
            decoder,
        })
    }

    pub fn flags(&self) -> FusionFlags {
        FusionFlags {
            use_2d: self.cfg.use_2d_features,
            use_identifiers: self.cfg.use_object_identifiers,
        }
    }

    /// Every persistent parameter, by stable name.
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.lm.params();
        out.extend(self.point_encoder.params());
        out.extend(self.obj3d.params());
        out.extend(self.fuser.params());
        out.extend(self.seg_proj.params("seg_proj"));
        out.extend(self.decoder.params());
        out
    }

    /// Parameters the optimizer updates; honors `freeze_base`.
    pub fn trainable_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.lm.trainable_params(self.cfg.freeze_base);
        out.extend(self.point_encoder.params());
        out.extend(self.obj3d.params());
        out.extend(self.fuser.params());
        out.extend(self.seg_proj.params("seg_proj"));
        out.extend(self.decoder.params());
        out
    }

    /// Superpoint features `[S×d_dec]` for a cached scene.
    pub fn scene_features(&self, entry: &SceneEntry) -> Result<Tensor<T>> {
        self.point_encoder.encode_with_groups(&entry.pc, &entry.sp, &entry.knn)
    }

    /// Raw 3D (and, per flags, 2D) features for every proposal in the scene.
    pub fn object_features(
        &self,
        entry: &SceneEntry,
    ) -> Result<Vec<ObjectFeatures<T>>> {
        self.object_features_for(entry, &entry.proposals)
    }

    /// Like `object_features`, but over an explicit proposal list (training
    /// augmentation substitutes perturbed copies here).
    pub fn object_features_for(
        &self,
        entry: &SceneEntry,
        proposals: &[crate::encoder::ObjectProposal],
    ) -> Result<Vec<ObjectFeatures<T>>> {
        let mut out = Vec::with_capacity(proposals.len());
        for obj in proposals {
            let f3d = extract_object_features_3d(obj, &self.obj3d)?;
            let f2d = if self.cfg.use_2d_features {
                Some(extract_object_features_2d(obj, &entry.views, &self.view_provider)?)
            } else {
                None
            };
            out.push(ObjectFeatures { f3d_raw: f3d, f2d_raw: f2d });
        }
        Ok(out)
    }

    /// Interleaved fused token rows for the whole scene.
    pub fn fused_scene_tokens(&self, entry: &SceneEntry) -> Result<Tensor<T>> {
        self.fused_scene_tokens_for(entry, &entry.proposals)
    }

    /// Interleaved fused token rows over an explicit proposal list.
    pub fn fused_scene_tokens_for(
        &self,
        entry: &SceneEntry,
        proposals: &[crate::encoder::ObjectProposal],
    ) -> Result<Tensor<T>> {
        let feats = self.object_features_for(entry, proposals)?;
        let items: Vec<_> = proposals.iter().cloned().zip(feats).collect();
        let (lo, hi) = entry.pc.bounds();
        build_interleaved_sequence(&items, &self.lm, &self.vocab, &self.fuser, lo, hi, &self.flags())
    }

    /// Prompt embeddings (and layout when `response` is given).
    pub fn prompt(
        &self,
        entry: &SceneEntry,
        instruction: &str,
        response: Option<&str>,
    ) -> Result<PromptLayout<T>> {
        self.prompt_with_proposals(entry, &entry.proposals, instruction, response)
    }

    /// `prompt` over an explicit proposal list.
    pub fn prompt_with_proposals(
        &self,
        entry: &SceneEntry,
        proposals: &[crate::encoder::ObjectProposal],
        instruction: &str,
        response: Option<&str>,
    ) -> Result<PromptLayout<T>> {
        let fused = self.fused_scene_tokens_for(entry, proposals)?;
        let instr_ids = self.vocab.tokenize(instruction);
        let resp_ids = response.map(|r| self.vocab.tokenize(r));
        assemble_prompt(&self.lm, &self.vocab, &instr_ids, &fused, resp_ids.as_deref())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: BTreeMap<String, Tensor<T>> = self.params().into_iter().collect();
        checkpoint::save(path, &map, false)?;
        self.vocab.save(&vocab_sidecar(path))?;
        self.cfg.save(&config_sidecar(path))
    }

    /// Rebuild from the config sidecar, then overwrite every parameter from
    /// the checkpoint; names and shapes must match exactly.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = RunConfig::load(&config_sidecar(path))?;
        let model = Self::new(cfg)?;
        let stored = Vocabulary::load(
            &vocab_sidecar(path),
            model.vocab.base_len(),
            model.vocab.byte_offset(),
        )?;
        if stored.tokens() != model.vocab.tokens() {
            return Err(Error::Checkpoint(
                "vocabulary sidecar does not match the grammar vocabulary".into(),
            ));
        }
        let mut entries = checkpoint::load(path)?;
        for (name, param) in model.params() {
            let (shape, values) = entries.remove(&name).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint missing parameter {name}"))
            })?;
            if shape != param.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {shape:?} vs model {:?}",
                    param.shape()
                )));
            }
            let data: Vec<T> = values.iter().map(|&v| T::lit(v)).collect();
            param.set_data(&data);
        }
        if let Some(extra) = entries.keys().next() {
            return Err(Error::Checkpoint(format!("checkpoint has unknown parameter {extra}")));
        }
        Ok(model)
    }
}
