//! Frame-level ROC curves and AUC.
//!
//! Tied scores collapse into one curve point, so the trapezoidal area
//! equals the Mann-Whitney statistic with ties counted as one half.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores for {labels} ground-truth labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("ground truth must contain both anomalous and normal frames")]
    SingleClass,
    #[error("score {index} is NaN")]
    NanScore { index: usize },
}

/// Binary frame labels, `true` marking an anomalous frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Vec<bool>,
}

impl GroundTruth {
    pub fn new(labels: Vec<bool>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Keeps only the labels at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self::new(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Threshold-descending, starting at `(+inf, 0, 0)` and ending at
    /// `(min score, 1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

pub fn roc_curve(scores: &[f64], truth: &GroundTruth) -> Result<RocCurve, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: truth.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NanScore { index });
    }
    let positives = truth.positives();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth.labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let mut curve = RocCurve { points, auc: 0.0 };
    curve.auc = auc(&curve);
    Ok(curve)
}

/// Trapezoidal area under the stored points.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Writes `threshold,fpr,tpr` rows followed by `# auc=<value>`.
pub fn write_roc_csv<W: Write>(curve: &RocCurve, out: &mut W) -> io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in &curve.points {
        writeln!(out, "{:?},{:?},{:?}", p.threshold, p.fpr, p.tpr)?;
    }
    writeln!(out, "# auc={:.16e}", curve.auc)
}

/// Centred moving average, truncated at the sequence edges.
///
/// This is a generic post-filter, not part of the detector itself.
pub fn moving_average(scores: &[f64], half_width: usize) -> Vec<f64> {
    let n = scores.len();
    (0..n)
        .map(|i| {
            if half_width == 0 {
                return scores[i];
            }
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width + 1).min(n);
            scores[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
