//! Evaluation harness (free-running generation scored per task) and
//! single-sample inference.

use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::language::extract_seg_embedding;
use crate::maskdecoder::project_seg_query;
use crate::metrics::{
    acc_at_k, bleu4, captioning_at_iou, cider, exact_match, mask_iou, miou,
    ExactMatchMetrics, GatedCaptionMetrics, MetricReport, QaMetrics, SegmentationMetrics,
};
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;
use crate::numerics::{no_grad, ops};
use crate::pointcloud::pooling::{unpool_mask, DEFAULT_UNPOOL_THRESHOLD};
use crate::pointcloud::scene::{InstanceMask, MaskLevel};
use crate::pointcloud::synth::TaskKind;

use super::data::{Dataset, SceneEntry};
use super::net::Segmenter;

pub struct InferResult {
    pub text: String,
    /// Hard point-level mask; absent when the model emitted no `<SEG>`.
    pub mask: Option<InstanceMask>,
}

/// Largest connected component of a hard point mask under the scene's kNN
/// graph (edges taken in either direction). An instance mask should be one
/// spatially coherent blob; this drops stray predicted points elsewhere in
/// the scene. Deterministic for a fixed mask.
pub fn largest_component(mask: &InstanceMask, knn: &[Vec<usize>]) -> InstanceMask {
    let bits = mask.bits();
    let n = bits.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, nbrs) in knn.iter().enumerate() {
        if !bits[i] {
            continue;
        }
        for &j in nbrs {
            if bits[j] {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut best_size = 0;
    let mut best_id = usize::MAX;
    let mut next_id = 0;
    for start in 0..n {
        if !bits[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        comp[start] = id;
        let mut stack = vec![start];
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            for &j in &adj[i] {
                if comp[j] == usize::MAX {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
        if size > best_size {
            best_size = size;
            best_id = id;
        }
    }
    let keep: Vec<bool> = (0..n).map(|i| bits[i] && comp[i] == best_id).collect();
    InstanceMask::hard(mask.level, keep)
}

/// Decode a point mask from a seg hidden state for a given scene.
pub fn point_mask_from_h_seg<T: Real>(
    model: &Segmenter<T>,
    entry: &SceneEntry,
    h_seg: &Tensor<T>,
) -> Result<InstanceMask> {
    let query = project_seg_query(&model.seg_proj, h_seg)?;
    let sp_feats = model.scene_features(entry)?;
    let logits = model.decoder.decode_mask(&query, &sp_feats)?;
    let probs = ops::sigmoid(&logits).to_f64s();
    let soft = InstanceMask::soft(MaskLevel::Superpoint, probs);
    let hard = unpool_mask(&soft, &entry.sp, DEFAULT_UNPOOL_THRESHOLD)?;
    Ok(largest_component(&hard, &entry.knn))
}

/// Full inference path: generate, then decode a mask if `<SEG>` appeared.
pub fn infer_on_entry<T: Real>(
    model: &Segmenter<T>,
    entry: &SceneEntry,
    instruction: &str,
) -> Result<InferResult> {
    no_grad(|| {
        let layout = model.prompt(entry, instruction, None)?;
        let eos = model.vocab.eos_id();
        let generated =
            model.lm.generate(&layout.emb, model.cfg.max_generated_tokens, eos)?;
        let text_ids: Vec<usize> = generated.iter().copied().filter(|&id| id != eos).collect();
        let text = model.vocab.detokenize(&text_ids)?;
        let seg_at = generated.iter().position(|&id| Some(id) == model.vocab.seg_id());
        let mask = match seg_at {
            Some(idx) => {
                // re-run with the generated tokens as inputs so the hidden
                // state at the <SEG> position exists
                let gen_emb = model.lm.embed(&generated[..=idx])?;
                let emb = ops::concat_rows(&[layout.emb.clone(), gen_emb])?;
                let out = model.lm.forward(&emb)?;
                let h_seg = extract_seg_embedding(&out.hidden, layout.emb.rows() + idx)?;
                Some(point_mask_from_h_seg(model, entry, &h_seg)?)
            }
            None => None,
        };
        Ok(InferResult { text, mask })
    })
}

/// One scored sample, decoupled from the model so aggregation is testable
/// against hand computations.
#[derive(Debug, Clone)]
pub struct SamplePrediction {
    pub task: TaskKind,
    pub text: String,
    pub reference: String,
    /// Present for mask-bearing tasks; 0.0 when no mask was emitted.
    pub iou: Option<f64>,
    pub mask_point_indices: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    sample_id: usize,
    text: &'a str,
    mask_point_indices: &'a [usize],
}

pub fn write_predictions(path: &Path, preds: &[SamplePrediction]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (i, p) in preds.iter().enumerate() {
        let line = PredictionLine {
            sample_id: i,
            text: &p.text,
            mask_point_indices: p.mask_point_indices.as_deref().unwrap_or(&[]),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::Validation(format!("prediction encode: {e}")))?;
        writeln!(w, "{json}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn task_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Referring => "referring",
        TaskKind::Spatial => "spatial",
        TaskKind::Reasoning => "reasoning",
        TaskKind::Qa => "qa",
    }
}

fn seg_block(ious: &[f64]) -> Result<SegmentationMetrics> {
    Ok(SegmentationMetrics {
        miou: miou(ious)?,
        acc_at_025: acc_at_k(ious, 0.25)?,
        acc_at_05: acc_at_k(ious, 0.5)?,
        count: ious.len(),
    })
}

/// Pure aggregation of per-sample predictions into the report.
pub fn aggregate(preds: &[SamplePrediction]) -> Result<MetricReport> {
    let mut report = MetricReport::new();
    let seg: Vec<&SamplePrediction> = preds.iter().filter(|p| p.iou.is_some()).collect();
    if !seg.is_empty() {
        let ious: Vec<f64> = seg.iter().map(|p| p.iou.unwrap()).collect();
        report.segmentation = Some(seg_block(&ious)?);
        for task in [TaskKind::Referring, TaskKind::Spatial, TaskKind::Reasoning] {
            let task_ious: Vec<f64> = seg
                .iter()
                .filter(|p| p.task == task)
                .map(|p| p.iou.unwrap())
                .collect();
            if !task_ious.is_empty() {
                report.per_task.insert(task_name(task).into(), seg_block(&task_ious)?);
            }
        }
        let corpus: Vec<(String, Vec<String>)> = seg
            .iter()
            .map(|p| (p.text.clone(), vec![p.reference.clone()]))
            .collect();
        let (cider_scores, _) = cider(&corpus)?;
        let bleu_scores: Vec<f64> = seg
            .iter()
            .map(|p| bleu4(&p.text, std::slice::from_ref(&p.reference)))
            .collect::<Result<_>>()?;
        report.captioning = Some(GatedCaptionMetrics {
            c_at_05: captioning_at_iou(&cider_scores, &ious, 0.5)?,
            b4_at_05: captioning_at_iou(&bleu_scores, &ious, 0.5)?,
            count: seg.len(),
        });
    }
    let qa: Vec<&SamplePrediction> =
        preds.iter().filter(|p| p.task == TaskKind::Qa).collect();
    if !qa.is_empty() {
        let corpus: Vec<(String, Vec<String>)> = qa
            .iter()
            .map(|p| (p.text.clone(), vec![p.reference.clone()]))
            .collect();
        let (_, cider_mean) = cider(&corpus)?;
        let mut bleu_sum = 0.0;
        let mut em_sum = 0.0;
        let mut emr_sum = 0.0;
        for p in &qa {
            bleu_sum += bleu4(&p.text, std::slice::from_ref(&p.reference))?;
            let (em, emr) = exact_match(&p.text, std::slice::from_ref(&p.reference))?;
            em_sum += f64::from(em);
            emr_sum += f64::from(emr);
        }
        let n = qa.len() as f64;
        report.qa = Some(QaMetrics { cider: cider_mean, bleu4: bleu_sum / n, count: qa.len() });
        report.exact_match = Some(ExactMatchMetrics {
            em: em_sum / n,
            em_r: emr_sum / n,
            count: qa.len(),
        });
    }
    report.validate()?;
    Ok(report)
}

/// Score one dataset split with free-running generation.
pub fn predictions<T: Real>(
    model: &Segmenter<T>,
    ds: &Dataset,
) -> Result<Vec<SamplePrediction>> {
    let mut preds = Vec::with_capacity(ds.samples.len());
    for sample in &ds.samples {
        let entry = ds
            .scenes
            .get(&sample.scene)
            .ok_or_else(|| Error::Validation(format!("scene {} not loaded", sample.scene)))?;
        let result = infer_on_entry(model, entry, &sample.instruction)?;
        let (iou, mask_point_indices) = if sample.task == TaskKind::Qa {
            (None, None)
        } else {
            let gt = entry.pc.instance_mask(sample.target_instance).ok_or_else(|| {
                Error::Validation(format!(
                    "target instance {} missing from scene {}",
                    sample.target_instance, sample.scene
                ))
            })?;
            match &result.mask {
                Some(pred) => {
                    let indices =
                        pred.bits().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
                    (Some(mask_iou(pred, &gt)?), Some(indices))
                }
                None => (Some(0.0), None),
            }
        };
        preds.push(SamplePrediction {
            task: sample.task,
            text: result.text,
            reference: sample.response.clone(),
            iou,
            mask_point_indices,
        });
    }
    Ok(preds)
}

pub fn evaluate<T: Real>(model: &Segmenter<T>, ds: &Dataset) -> Result<MetricReport> {
    aggregate(&predictions(model, ds)?)
}
