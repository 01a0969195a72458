use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::Mask;

/// Pixel confusion counts of a binary segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn pixel_counts(gt: &Mask, pred: &Mask) -> Result<PixelCounts> {
    if gt.dims() != pred.dims() {
        return Err(Error::shape(
            "metric",
            format!(
                "ground truth {:?} vs prediction {:?}",
                gt.dims(),
                pred.dims()
            ),
        ));
    }
    let mut c = PixelCounts::default();
    for (&g, &s) in gt.bits().iter().zip(pred.bits()) {
        match (g, s) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// `2|G∩S| / (|G|+|S|)`; two empty masks score 1.
pub fn dice(gt: &Mask, pred: &Mask) -> Result<f64> {
    let c = pixel_counts(gt, pred)?;
    Ok(ratio_or_one(2 * c.tp, 2 * c.tp + c.fp + c.fn_))
}

/// `TP / (TP + FP + FN)`; two empty masks score 1.
pub fn iou(gt: &Mask, pred: &Mask) -> Result<f64> {
    let c = pixel_counts(gt, pred)?;
    Ok(ratio_or_one(c.tp, c.tp + c.fp + c.fn_))
}

/// Mean of tumour and background IoU.
pub fn mean_iou(gt: &Mask, pred: &Mask) -> Result<f64> {
    let c = pixel_counts(gt, pred)?;
    let fg = ratio_or_one(c.tp, c.tp + c.fp + c.fn_);
    let bg = ratio_or_one(c.tn, c.tn + c.fp + c.fn_);
    Ok((fg + bg) / 2.0)
}

/// Fraction of correctly labelled pixels.
pub fn pixel_accuracy(gt: &Mask, pred: &Mask) -> Result<f64> {
    let c = pixel_counts(gt, pred)?;
    Ok((c.tp + c.tn) as f64 / (c.tp + c.tn + c.fp + c.fn_) as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Sample-level accuracy `trace / total`.
    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        self.trace() as f64 / t as f64
    }

    /// Row-normalised diagonal `n_jj / Σ_i n_ji` per true class (`None` for an
    /// absent class). This is the per-class "precision" column of the
    /// published confusion table, which is really a recall.
    pub fn row_rates(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let s: u64 = row.iter().sum();
                (s > 0).then(|| row[j] as f64 / s as f64)
            })
            .collect()
    }

    /// Mean of the defined row rates.
    pub fn macro_rate(&self) -> f64 {
        let rates: Vec<f64> = self.row_rates().into_iter().flatten().collect();
        if rates.is_empty() {
            return 0.0;
        }
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

/// Classification summary derived from label lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub matrix: ConfusionMatrix,
    pub row_rates: Vec<Option<f64>>,
    pub accuracy: f64,
    pub macro_rate: f64,
}

impl ClassRates {
    pub fn from_matrix(matrix: ConfusionMatrix) -> Self {
        ClassRates {
            row_rates: matrix.row_rates(),
            accuracy: matrix.accuracy(),
            macro_rate: matrix.macro_rate(),
            matrix,
        }
    }
}

pub fn confusion_and_rates(
    true_labels: &[usize],
    pred_labels: &[usize],
    num_classes: usize,
) -> Result<ClassRates> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    let mut m = ConfusionMatrix::new(num_classes);
    for (&t, &p) in true_labels.iter().zip(pred_labels) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) outside [0, {num_classes})"
            )));
        }
        m.counts[t][p] += 1;
    }
    Ok(ClassRates::from_matrix(m))
}

/// Sample-level classification accuracy.
pub fn classification_accuracy(
    true_labels: &[usize],
    pred_labels: &[usize],
    num_classes: usize,
) -> Result<f64> {
    confusion_and_rates(true_labels, pred_labels, num_classes).map(|r| r.accuracy)
}
