use serde::Serialize;

use crate::datapipe::{Sample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgops::Mask;
use crate::lossmetrics::{confusion_and_rates, dice, iou, mean_iou, ClassRates, ConfusionMatrix};
use crate::nets::Network;

/// Hard outputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    pub mask: Mask,
    pub class: Option<usize>,
}

/// Anything that can label a sample; networks, or oracles in tests.
pub trait Predictor: Sync {
    fn predict_sample(&self, s: &Sample) -> Result<SamplePrediction>;
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

impl Predictor for Network<f32> {
    /// Threshold 0.5 on the segmentation map, argmax on class scores.
    fn predict_sample(&self, s: &Sample) -> Result<SamplePrediction> {
        let map = if self.config().uses_map() {
            s.prelim.as_ref()
        } else {
            None
        };
        let p = self.predict(&s.image, map)?;
        let (h, w) = s.image.dims();
        Ok(SamplePrediction {
            mask: Mask::new(h, w, p.seg_map.iter().map(|&v| v > 0.5).collect())?,
            class: p.class_probs.as_deref().map(argmax),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub id: String,
    pub dice: f64,
    pub iou: f64,
    pub mean_iou: f64,
    pub label: usize,
    pub predicted_label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub samples: usize,
    pub dice: f64,
    pub iou: f64,
    pub mean_iou: f64,
    pub accuracy: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub per_sample: Vec<SampleMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub dice: f64,
    pub iou: f64,
    pub mean_iou: f64,
    pub accuracy: Option<f64>,
}

/// Per-fold and fold-averaged metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub config_fingerprint: String,
    pub folds: Vec<FoldMetrics>,
    /// Arithmetic mean of the per-fold values.
    pub aggregate: Aggregate,
    /// Pooled over every evaluated sample.
    pub classification: Option<ClassRates>,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// JSON with the wall clock zeroed, for reproducibility comparisons.
    pub fn to_json_untimed(&self) -> Result<String> {
        MetricsReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
        .to_json()
    }
}

/// Evaluates `samples` (one held-out fold) in id order.
pub fn evaluate_fold(
    predictor: &dyn Predictor,
    samples: &[&Sample],
    fold: usize,
    exec: Exec,
) -> Result<FoldMetrics> {
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "fold {fold} has no samples to evaluate"
        )));
    }
    let mut ordered: Vec<&Sample> = samples.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let per: Vec<Result<SampleMetrics>> = exec.map(&ordered, |s| {
        let p = predictor.predict_sample(s)?;
        Ok(SampleMetrics {
            id: s.id.clone(),
            dice: dice(&s.mask, &p.mask)?,
            iou: iou(&s.mask, &p.mask)?,
            mean_iou: mean_iou(&s.mask, &p.mask)?,
            label: s.label,
            predicted_label: p.class,
        })
    });
    let per: Vec<SampleMetrics> = per.into_iter().collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |f: fn(&SampleMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    let (accuracy, confusion) = if per.iter().all(|m| m.predicted_label.is_some()) {
        let truth: Vec<usize> = per.iter().map(|m| m.label).collect();
        let pred: Vec<usize> = per.iter().filter_map(|m| m.predicted_label).collect();
        let rates = confusion_and_rates(&truth, &pred, NUM_CLASSES)?;
        (Some(rates.accuracy), Some(rates.matrix))
    } else {
        (None, None)
    };
    Ok(FoldMetrics {
        fold,
        samples: per.len(),
        dice: mean(|m| m.dice),
        iou: mean(|m| m.iou),
        mean_iou: mean(|m| m.mean_iou),
        accuracy,
        confusion,
        per_sample: per,
    })
}

/// Averages fold metrics and pools the confusion matrices.
pub fn build_report(
    folds: Vec<FoldMetrics>,
    config_fingerprint: String,
    wall_clock_secs: f64,
) -> Result<MetricsReport> {
    if folds.is_empty() {
        return Err(Error::Empty("fold metrics"));
    }
    let k = folds.len() as f64;
    let mean = |f: fn(&FoldMetrics) -> f64| folds.iter().map(f).sum::<f64>() / k;
    let accuracy = folds
        .iter()
        .map(|f| f.accuracy)
        .collect::<Option<Vec<f64>>>()
        .map(|a| a.iter().sum::<f64>() / k);
    let classification = folds
        .iter()
        .map(|f| f.confusion.clone())
        .collect::<Option<Vec<ConfusionMatrix>>>()
        .map(|ms| {
            let mut pooled = ConfusionMatrix::new(NUM_CLASSES);
            for m in &ms {
                for (r, row) in m.counts.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        pooled.counts[r][c] += v;
                    }
                }
            }
            ClassRates::from_matrix(pooled)
        });
    Ok(MetricsReport {
        config_fingerprint,
        aggregate: Aggregate {
            dice: mean(|f| f.dice),
            iou: mean(|f| f.iou),
            mean_iou: mean(|f| f.mean_iou),
            accuracy,
        },
        folds,
        classification,
        wall_clock_secs,
    })
}
