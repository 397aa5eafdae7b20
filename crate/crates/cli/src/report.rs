//! The evaluation report written by `convmcd eval`. The JSON layout is
//! described by `schemas/eval-report.schema.json`.

use convmcd::metrics::{MetricProtocol, MetricsReport, PROBABILITY_THRESHOLD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolRecord {
    pub probability_threshold: f64,
    pub mf_tolerance: f64,
    pub mf_thresholds: Vec<f64>,
    pub trimap_widths: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRow {
    pub name: String,
    pub dice: f64,
    pub jaccard: f64,
    pub hd: Option<f64>,
    pub mf: Option<f64>,
}

/// Means over images; `hd` and `mf` skip images where they are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanRow {
    pub dice: f64,
    pub jaccard: f64,
    pub hd: Option<f64>,
    pub mf: Option<f64>,
    pub images: usize,
    pub hd_images: usize,
    pub mf_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub protocol: ProtocolRecord,
    pub images: Vec<ImageRow>,
    pub mean: MeanRow,
}

impl EvalReport {
    pub fn new(report: &MetricsReport, protocol: &MetricProtocol) -> Self {
        let images: Vec<ImageRow> = report
            .images
            .iter()
            .map(|m| ImageRow {
                name: m.name.clone(),
                dice: m.dice,
                jaccard: m.jaccard,
                hd: m.hd,
                mf: m.mf,
            })
            .collect();
        Self {
            protocol: ProtocolRecord {
                probability_threshold: PROBABILITY_THRESHOLD,
                mf_tolerance: protocol.mf_tolerance,
                mf_thresholds: protocol.mf_thresholds.clone(),
                trimap_widths: protocol.trimap_widths.clone(),
            },
            mean: MeanRow {
                dice: report.mean.dice,
                jaccard: report.mean.jaccard,
                hd: report.mean.hd,
                mf: report.mean.mf,
                images: images.len(),
                hd_images: images.iter().filter(|r| r.hd.is_some()).count(),
                mf_images: images.iter().filter(|r| r.mf.is_some()).count(),
            },
            images,
        }
    }
}
