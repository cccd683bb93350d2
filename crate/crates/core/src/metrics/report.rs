//! Aggregated evaluation report, serialized as the eval command's JSON
//! output.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::text::NORMALIZATION_VERSION;

pub const METRIC_VERSION: &str = "metrics-v1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentationMetrics {
    pub miou: f64,
    #[serde(rename = "acc@0.25")]
    pub acc_at_025: f64,
    #[serde(rename = "acc@0.5")]
    pub acc_at_05: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QaMetrics {
    pub cider: f64,
    pub bleu4: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GatedCaptionMetrics {
    #[serde(rename = "c@0.5")]
    pub c_at_05: f64,
    #[serde(rename = "b4@0.5")]
    pub b4_at_05: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExactMatchMetrics {
    pub em: f64,
    pub em_r: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub metric_version: String,
    pub normalization_version: String,
    /// Mask metrics over all samples whose response carries a mask.
    pub segmentation: Option<SegmentationMetrics>,
    /// Mask metrics split by task name.
    pub per_task: BTreeMap<String, SegmentationMetrics>,
    pub qa: Option<QaMetrics>,
    pub captioning: Option<GatedCaptionMetrics>,
    pub exact_match: Option<ExactMatchMetrics>,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn new() -> Self {
        MetricReport {
            metric_version: METRIC_VERSION.into(),
            normalization_version: NORMALIZATION_VERSION.into(),
            segmentation: None,
            per_task: BTreeMap::new(),
            qa: None,
            captioning: None,
            exact_match: None,
            notes: vec![
                "Acc@k columns are mask Acc@k (mask IoU), not box IoU.".into(),
                "EM-R is a bidirectional-substring stand-in.".into(),
                "Object proposals are ground-truth instances, not detector output.".into(),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} outside [0,1]")));
            }
            Ok(())
        };
        let seg = |prefix: &str, s: &SegmentationMetrics| -> Result<()> {
            rate(&format!("{prefix}.miou"), s.miou)?;
            rate(&format!("{prefix}.acc@0.25"), s.acc_at_025)?;
            rate(&format!("{prefix}.acc@0.5"), s.acc_at_05)
        };
        if let Some(s) = &self.segmentation {
            seg("segmentation", s)?;
        }
        for (task, s) in &self.per_task {
            seg(task, s)?;
        }
        if let Some(q) = &self.qa {
            rate("qa.bleu4", q.bleu4)?;
            if !(0.0..=10.0).contains(&q.cider) {
                return Err(Error::Validation(format!("qa.cider = {} outside [0,10]", q.cider)));
            }
        }
        if let Some(c) = &self.captioning {
            rate("captioning.b4@0.5", c.b4_at_05)?;
            if !(0.0..=10.0).contains(&c.c_at_05) {
                return Err(Error::Validation(format!(
                    "captioning.c@0.5 = {} outside [0,10]",
                    c.c_at_05
                )));
            }
        }
        if let Some(e) = &self.exact_match {
            rate("em", e.em)?;
            rate("em_r", e.em_r)?;
        }
        Ok(())
    }
}

impl Default for MetricReport {
    fn default() -> Self {
        Self::new()
    }
}
