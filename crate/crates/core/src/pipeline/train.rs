//! Joint training loop over L = L_llm + L_mask.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::{extract_seg_embedding, llm_loss};
use crate::maskdecoder::{mask_loss, project_seg_query, total_loss};
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::encoder::ObjectProposal;
use crate::numerics::{backward, Adam, SeedRng};
use crate::pointcloud::pooling::{pool_gt_mask, DEFAULT_GT_POOL_TAU};

use super::data::Dataset;
use super::net::Segmenter;

/// One optimizer step as it appears in the loss log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub sample: usize,
    pub llm: f64,
    pub bce: f64,
    pub dice: f64,
    pub mask: f64,
    pub total: f64,
}

pub fn write_loss_log(path: &Path, log: &[StepLog]) -> Result<()> {
    use std::io::Write as _;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for entry in log {
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Validation(format!("log encode: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Perturbed copy of the scene's proposals: a random per-object color shift
/// plus a shuffled presentation order. Breaks rote recall of exact fused
/// token values so grounding has to rely on category structure.
fn augmented_proposals(
    proposals: &[ObjectProposal],
    amplitude: f64,
    rng: &mut SeedRng,
) -> Vec<ObjectProposal> {
    let mut out: Vec<ObjectProposal> = proposals
        .iter()
        .map(|p| {
            let mut p = p.clone();
            let shift =
                [rng.uniform(-amplitude, amplitude), rng.uniform(-amplitude, amplitude), rng.uniform(-amplitude, amplitude)];
            for c in &mut p.colors {
                for a in 0..3 {
                    c[a] = (c[a] + shift[a]).clamp(0.0, 1.0);
                }
            }
            p
        })
        .collect();
    rng.shuffle(&mut out);
    out
}

/// Loss of one sample, leaving the graph alive for backward.
fn sample_loss<T: Real>(
    model: &Segmenter<T>,
    ds: &Dataset,
    sample_index: usize,
    aug_rng: Option<&mut SeedRng>,
) -> Result<crate::maskdecoder::LossBreakdown<T>> {
    let sample = &ds.samples[sample_index];
    let entry = ds
        .scenes
        .get(&sample.scene)
        .ok_or_else(|| Error::Validation(format!("scene {} not loaded", sample.scene)))?;
    let layout = match aug_rng {
        Some(rng) => {
            let props = augmented_proposals(&entry.proposals, model.cfg.color_jitter, rng);
            model.prompt_with_proposals(entry, &props, &sample.instruction, Some(&sample.response))?
        }
        None => model.prompt(entry, &sample.instruction, Some(&sample.response))?,
    };
    let seq = layout.seq.as_ref().expect("training prompt has a response");
    let out = model.lm.forward(&layout.emb)?;
    let llm = llm_loss(&out.logits, seq)?;
    let (bce, dice) = match seq.seg_position {
        Some(pos) => {
            let h_seg = extract_seg_embedding(&out.hidden, pos)?;
            let query = project_seg_query(&model.seg_proj, &h_seg)?;
            let sp_feats = model.scene_features(entry)?;
            let logits = model.decoder.decode_mask(&query, &sp_feats)?;
            let gt_points = entry.pc.instance_mask(sample.target_instance).ok_or_else(|| {
                Error::Validation(format!(
                    "target instance {} missing from scene {}",
                    sample.target_instance, sample.scene
                ))
            })?;
            let gt_sp = pool_gt_mask(&gt_points, &entry.sp, DEFAULT_GT_POOL_TAU)?;
            mask_loss(&logits, &gt_sp)?
        }
        None => (Tensor::scalar(T::zero()), Tensor::scalar(T::zero())),
    };
    total_loss(llm, bce, dice)
}

/// Train in place; returns the per-step loss log. Deterministic for a fixed
/// seed: data order, init, and every update are pure functions of it.
pub fn train<T: Real>(
    model: &Segmenter<T>,
    ds: &Dataset,
    out_ckpt: &Path,
) -> Result<Vec<StepLog>> {
    if ds.samples.is_empty() {
        return Err(Error::Validation("training dataset has no samples".into()));
    }
    let trainable: Vec<Tensor<T>> =
        model.trainable_params().into_iter().map(|(_, t)| t).collect();
    let mut opt = Adam::with_lr(trainable, model.cfg.learning_rate);
    let mut order_rng = SeedRng::new(model.cfg.seed ^ 0x5EED_0000_0000_0001);
    let mut aug_rng = SeedRng::new(model.cfg.seed ^ 0x5EED_0000_0000_0002);
    let augment = model.cfg.color_jitter > 0.0;
    let mut log = Vec::new();
    let mut step = 0usize;
    for epoch in 0..model.cfg.epochs {
        let mut order: Vec<usize> = (0..ds.samples.len()).collect();
        order_rng.shuffle(&mut order);
        for &sample_index in &order {
            let lb = sample_loss(model, ds, sample_index, augment.then_some(&mut aug_rng))?;
            let total = lb.total.item().as_f64();
            if !total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at step {step} (sample {sample_index})"
                )));
            }
            opt.zero_grad();
            opt.prime_grads();
            backward(&lb.total)?;
            opt.step()?;
            step += 1;
            log.push(StepLog {
                step,
                epoch,
                sample: sample_index,
                llm: lb.llm.item().as_f64(),
                bce: lb.bce.item().as_f64(),
                dice: lb.dice.item().as_f64(),
                mask: lb.mask.item().as_f64(),
                total,
            });
            if model.cfg.checkpoint_interval > 0 && step % model.cfg.checkpoint_interval == 0 {
                let mut interim = out_ckpt.as_os_str().to_owned();
                interim.push(format!(".step{step}"));
                model.save(std::path::Path::new(&interim))?;
            }
        }
    }
    model.save(out_ckpt)?;
    Ok(log)
}
