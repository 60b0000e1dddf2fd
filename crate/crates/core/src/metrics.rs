//! Detection and segmentation evaluation: confusion-count metrics, bounding
//! box IoU, ROC AUC over soft masks, greedy detection matching and robust
//! summary statistics.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{BinaryMask, Detection2D, Rect};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("metric is undefined: {0}")]
    Undefined(String),
    #[error("cannot aggregate an empty sequence")]
    EmptyInput,
}

/// Pixel-wise confusion counts between a predicted and a ground-truth mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Intersection over union `tp / (tp + fp + fn)`.
    pub fn jaccard(&self) -> f64 {
        let denom = self.true_pos + self.false_pos + self.false_neg;
        if denom == 0 {
            1.0 // both masks empty
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    /// Dice coefficient `2tp / (2tp + fp + fn)`.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.true_pos + self.false_pos + self.false_neg;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.true_pos as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        if self.true_pos + self.false_pos == 0 {
            // No positive predictions: perfect only if there was nothing to find.
            return if self.false_neg == 0 { 1.0 } else { 0.0 };
        }
        self.true_pos as f64 / (self.true_pos + self.false_pos) as f64
    }

    pub fn recall(&self) -> f64 {
        if self.true_pos + self.false_neg == 0 {
            return if self.false_pos == 0 { 1.0 } else { 0.0 };
        }
        self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
    }

    /// Harmonic mean of precision and recall. Computed as
    /// `2tp / (2tp + fp + fn)`, which is algebraically identical and shares
    /// the Dice coefficient's edge-case convention.
    pub fn f1(&self) -> f64 {
        self.dice()
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            1.0
        } else {
            (self.true_pos + self.true_neg) as f64 / total as f64
        }
    }
}

/// Tallies per-pixel agreement between two equally-sized masks.
pub fn mask_confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

/// Intersection-over-union of two pixel rectangles; 0 when disjoint or
/// degenerate.
pub fn bbox_iou(a: &Rect, b: &Rect) -> f64 {
    let ix = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let iy = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let intersection = ix * iy;
    let union = a.area() + b.area() - intersection;
    if union <= 0.0 {
        0.0
    } else {
        intersection / union
    }
}

/// Per-pixel scores in `[0, 1]` for threshold-sweep analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, MetricsError> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(MetricsError::ShapeMismatch(format!(
                "{} values for a {}x{} mask",
                values.len(),
                width,
                height
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(MetricsError::Undefined(
                "soft mask values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Area under the ROC curve, swept over every distinct prediction value as a
/// threshold (trapezoidal rule, endpoints `(0,0)` and `(1,1)`).
///
/// Errors when the ground truth contains a single class — the curve is
/// undefined without both positives and negatives.
pub fn roc_auc(pred: &SoftMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let positives = gt.count_true() as f64;
    let negatives = gt.bits().len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(MetricsError::Undefined(
            "ROC needs both positive and negative ground-truth pixels".into(),
        ));
    }

    let mut scored: Vec<(f64, bool)> = pred
        .values()
        .iter()
        .copied()
        .zip(gt.bits().iter().copied())
        .collect();
    // Descending by score; grouping equal scores below makes the in-group
    // order irrelevant.
    scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let mut auc = 0.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_tpr, mut prev_fpr) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / positives;
        let fpr = fp as f64 / negatives;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(auc)
}

/// Greedy detection-to-ground-truth matching and per-class precision.
///
/// Within each class, predictions are taken in descending confidence; each
/// one claims the unmatched ground-truth box of highest IoU if that IoU
/// reaches `iou_threshold`, and every ground-truth box can be claimed once.
/// Classes with no predictions score 1.0 (vacuously no false positives).
pub fn match_detections(
    preds: &[Detection2D],
    gts: &[(i64, Rect)],
    iou_threshold: f64,
) -> BTreeMap<i64, f64> {
    let classes: BTreeSet<i64> = preds
        .iter()
        .map(Detection2D::class_id)
        .chain(gts.iter().map(|(c, _)| *c))
        .collect();

    let mut precision = BTreeMap::new();
    for &class in &classes {
        let mut class_preds: Vec<&Detection2D> =
            preds.iter().filter(|d| d.class_id() == class).collect();
        // Stable sort: equal confidences keep their input order.
        class_preds.sort_by(|a, b| b.confidence().total_cmp(&a.confidence()));
        let class_gts: Vec<&Rect> = gts
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, r)| r)
            .collect();

        if class_preds.is_empty() {
            precision.insert(class, 1.0);
            continue;
        }

        let mut claimed = vec![false; class_gts.len()];
        let mut matched = 0usize;
        for pred in &class_preds {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in class_gts.iter().enumerate() {
                if claimed[gi] {
                    continue;
                }
                let iou = bbox_iou(pred.bbox(), gt);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            if let Some((gi, _)) = best {
                claimed[gi] = true;
                matched += 1;
            }
        }
        precision.insert(class, matched as f64 / class_preds.len() as f64);
    }
    precision
}

/// Robust location/spread summary of a metric across images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Lower-middle element for even lengths (no averaging).
    pub median: f64,
    /// Median absolute deviation from the median.
    pub mad: f64,
}

fn median_of(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Mean, population std, median and MAD of a non-empty sequence.
pub fn aggregate(values: &[f64]) -> Result<MetricSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let median = median_of(&sorted);

    let mut deviations: Vec<f64> = values.iter().map(|v| (v - median).abs()).collect();
    deviations.sort_unstable_by(f64::total_cmp);
    let mad = median_of(&deviations);

    Ok(MetricSummary {
        mean,
        std: variance.sqrt(),
        median,
        mad,
    })
}
