//! Segmentation scores for small-target detection: pixel IoU, object-level
//! detection probability (Pd) and pixel false-alarm rate (Fa), and ROC sweeps.
//!
//! A ground-truth target is detected when a predicted component's centroid
//! lies within `centroid_threshold` pixels of its centroid. Pairs are matched
//! one-to-one, greedily by ascending distance. Only pixels of unmatched
//! predicted components count as false alarms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::noise_repr::PredictionMap;
use crate::scalar::Scalar;

pub const DEFAULT_CENTROID_THRESHOLD: f64 = 3.0;
/// Fa is reported per million pixels.
pub const FA_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IouCounts {
    pub intersection: usize,
    pub union: usize,
}

impl IouCounts {
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    fn add(self, other: IouCounts) -> IouCounts {
        IouCounts {
            intersection: self.intersection + other.intersection,
            union: self.union + other.union,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdFaCounts {
    pub tp_targets: usize,
    pub total_targets: usize,
    pub false_pixels: usize,
    pub total_pixels: usize,
}

impl PdFaCounts {
    /// Detected fraction; 1.0 when there is nothing to detect.
    pub fn pd(&self) -> f64 {
        if self.total_targets == 0 {
            1.0
        } else {
            self.tp_targets as f64 / self.total_targets as f64
        }
    }

    /// False pixels per million pixels.
    pub fn fa(&self) -> f64 {
        FA_SCALE * self.false_pixels as f64 / self.total_pixels as f64
    }

    fn add(self, o: PdFaCounts) -> PdFaCounts {
        PdFaCounts {
            tp_targets: self.tp_targets + o.tp_targets,
            total_targets: self.total_targets + o.total_targets,
            false_pixels: self.false_pixels + o.false_pixels,
            total_pixels: self.total_pixels + o.total_pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub pd: f64,
    /// Scaled by 10^6.
    pub fa: f64,
    pub tp_targets: usize,
    pub total_targets: usize,
    pub false_pixels: usize,
    pub total_pixels: usize,
    pub intersection: usize,
    pub union: usize,
}

impl MetricsReport {
    pub fn from_counts(iou: IouCounts, pdfa: PdFaCounts) -> Self {
        Self {
            iou: iou.iou(),
            pd: pdfa.pd(),
            fa: pdfa.fa(),
            tp_targets: pdfa.tp_targets,
            total_targets: pdfa.total_targets,
            false_pixels: pdfa.false_pixels,
            total_pixels: pdfa.total_pixels,
            intersection: iou.intersection,
            union: iou.union,
        }
    }
}

pub fn iou_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<IouCounts> {
    pred.check_same_shape(gt, "iou prediction and ground truth")?;
    let mut c = IouCounts::default();
    for (p, g) in pred.bits().iter().zip(gt.bits()) {
        c.intersection += (*p && *g) as usize;
        c.union += (*p || *g) as usize;
    }
    Ok(c)
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(iou_counts(pred, gt)?.iou())
}

/// Micro-averaged IoU: total intersection over total union.
pub fn iou_dataset(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<f64> {
    check_lengths(preds.len(), gts.len())?;
    let counts = preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| iou_counts(p, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().fold(IouCounts::default(), IouCounts::add).iou())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::param(
            "gts",
            format!("{a} predictions but {b} ground-truth masks"),
        ))
    }
}

/// Counts plus the accepted `(gt component, pred component)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PdFaOutcome {
    pub counts: PdFaCounts,
    pub matches: Vec<(usize, usize)>,
}

pub fn pd_fa_detailed(pred: &BinaryMask, gt: &BinaryMask, centroid_threshold: f64) -> Result<PdFaOutcome> {
    pred.check_same_shape(gt, "pd/fa prediction and ground truth")?;
    if !(centroid_threshold.is_finite() && centroid_threshold > 0.0) {
        return Err(Error::param(
            "centroid_threshold",
            format!("must be positive, got {centroid_threshold}"),
        ));
    }
    let gt_comps = label_components(gt);
    let pred_comps = label_components(pred);
    let gt_c: Vec<_> = gt_comps.iter().map(|c| c.centroid()).collect();
    let pred_c: Vec<_> = pred_comps.iter().map(|c| c.centroid()).collect();

    let mut pairs = Vec::new();
    for (gi, g) in gt_c.iter().enumerate() {
        for (pi, p) in pred_c.iter().enumerate() {
            let d = ((g.0 - p.0).powi(2) + (g.1 - p.1).powi(2)).sqrt();
            if d <= centroid_threshold {
                pairs.push((d, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_used = vec![false; gt_comps.len()];
    let mut pred_used = vec![false; pred_comps.len()];
    let mut matches = Vec::new();
    for (_, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            matches.push((gi, pi));
        }
    }
    let false_pixels = pred_comps
        .iter()
        .zip(&pred_used)
        .filter(|(_, used)| !**used)
        .map(|(c, _)| c.len())
        .sum();
    Ok(PdFaOutcome {
        counts: PdFaCounts {
            tp_targets: matches.len(),
            total_targets: gt_comps.len(),
            false_pixels,
            total_pixels: gt.bits().len(),
        },
        matches,
    })
}

pub fn pd_fa(pred: &BinaryMask, gt: &BinaryMask, centroid_threshold: f64) -> Result<PdFaCounts> {
    Ok(pd_fa_detailed(pred, gt, centroid_threshold)?.counts)
}

fn pd_fa_dataset(preds: &[BinaryMask], gts: &[BinaryMask], centroid_threshold: f64) -> Result<PdFaCounts> {
    check_lengths(preds.len(), gts.len())?;
    let counts = preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| pd_fa(p, g, centroid_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().fold(PdFaCounts::default(), PdFaCounts::add))
}

/// Dataset-level IoU, Pd and Fa.
pub fn evaluate(preds: &[BinaryMask], gts: &[BinaryMask], centroid_threshold: f64) -> Result<MetricsReport> {
    check_lengths(preds.len(), gts.len())?;
    if preds.is_empty() {
        return Err(Error::Empty("evaluate needs at least one mask pair"));
    }
    let iou = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| iou_counts(p, g))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(IouCounts::default(), IouCounts::add);
    let pdfa = pd_fa_dataset(preds, gts, centroid_threshold)?;
    Ok(MetricsReport::from_counts(iou, pdfa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Sweeps binarization thresholds (score `>= threshold` is positive) and
/// records dataset-level `(fa, pd)` at each.
pub fn roc<T: Scalar>(
    preds: &[PredictionMap<T>],
    gts: &[BinaryMask],
    thresholds: &[f64],
    centroid_threshold: f64,
) -> Result<RocCurve> {
    check_lengths(preds.len(), gts.len())?;
    if preds.is_empty() {
        return Err(Error::Empty("roc needs at least one prediction"));
    }
    if thresholds.is_empty() {
        return Err(Error::Empty("roc needs at least one threshold"));
    }
    for t in thresholds {
        if !(*t > 0.0 && *t <= 1.0) {
            return Err(Error::param("thresholds", format!("{t} is outside (0, 1]")));
        }
    }
    if thresholds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("thresholds", "must be strictly decreasing"));
    }
    let points = thresholds
        .iter()
        .map(|&t| {
            let masks: Vec<BinaryMask> = preds.par_iter().map(|p| p.binarize(T::lit(t))).collect();
            let c = pd_fa_dataset(&masks, gts, centroid_threshold)?;
            Ok(RocPoint {
                threshold: t,
                fa: c.fa(),
                pd: c.pd(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve { points })
}
