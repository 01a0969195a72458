use serde::{Deserialize, Serialize};

use crate::diffcore::Real;
use crate::error::{Error, Result};
use crate::imgops::{boundary_distance_map, Mask};

/// Weights of the combined objective and of the boundary weight map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_seg: f64,
    pub alpha_cls: f64,
    pub omega0: f64,
    pub sigma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_seg: 2.0,
            alpha_cls: 1.0,
            omega0: 10.0,
            sigma: 5.0,
        }
    }
}

impl LossWeights {
    /// `alpha_cls` may be zero to switch the classification term off.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_seg > 0.0) || !(self.alpha_cls >= 0.0) {
            return Err(Error::Config(format!(
                "alpha_seg must be > 0 and alpha_cls ≥ 0 (got {}, {})",
                self.alpha_seg, self.alpha_cls
            )));
        }
        if !(self.omega0 >= 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "omega0 must be ≥ 0 and sigma > 0 (got {}, {})",
                self.omega0, self.sigma
            )));
        }
        Ok(())
    }
}

/// Shape of the boundary emphasis term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightForm {
    /// `1 + ω₀·exp(−d²/2σ²)`: peaks on the boundary and decays to 1.
    #[default]
    Gaussian,
    /// `1 + ω₀·exp(d/2σ²)` taken literally; grows with distance.
    AsPrinted,
}

/// Per-pixel boundary weights, row-major.
pub fn weight_map(gt: &Mask, w: &LossWeights) -> Result<Vec<f64>> {
    weight_map_with(gt, w, WeightForm::Gaussian)
}

pub fn weight_map_with(gt: &Mask, w: &LossWeights, form: WeightForm) -> Result<Vec<f64>> {
    let d = boundary_distance_map(gt)?;
    let two_s2 = 2.0 * w.sigma * w.sigma;
    Ok(d.values
        .iter()
        .map(|&dx| match form {
            WeightForm::Gaussian => 1.0 + w.omega0 * (-(dx * dx) / two_s2).exp(),
            WeightForm::AsPrinted => 1.0 + w.omega0 * (dx / two_s2).exp(),
        })
        .collect())
}

fn check_extent(gt: &Mask, n: usize, what: &str) -> Result<()> {
    let expected = gt.height() * gt.width();
    if n != expected {
        return Err(Error::shape(
            "loss",
            format!(
                "{what} has {n} values but ground truth is {}×{}",
                gt.height(),
                gt.width()
            ),
        ));
    }
    Ok(())
}

/// `1 − 2ΣWgs / (ΣWg + ΣWs)` and its gradient w.r.t. `pred`. `W ≡ 1` when
/// `weights` is `None`; both sides empty counts as a perfect match.
fn soft_dice<T: Real>(gt: &Mask, pred: &[T], weights: Option<&[T]>) -> Result<(T, Vec<T>)> {
    check_extent(gt, pred.len(), "prediction")?;
    if let Some(w) = weights {
        check_extent(gt, w.len(), "weight map")?;
    }
    let weight = |i: usize| weights.map_or(T::one(), |w| w[i]);
    let (mut inter, mut gsum, mut ssum) = (T::zero(), T::zero(), T::zero());
    for (i, (&g, &s)) in gt.bits().iter().zip(pred).enumerate() {
        let wx = weight(i);
        let gv = if g { T::one() } else { T::zero() };
        inter += wx * gv * s;
        gsum += wx * gv;
        ssum += wx * s;
    }
    let denom = gsum + ssum;
    if denom == T::zero() {
        return Ok((T::zero(), vec![T::zero(); pred.len()]));
    }
    let two = T::from_f64(2.0);
    let loss = T::one() - two * inter / denom;
    let d2 = denom * denom;
    let grad = gt
        .bits()
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let gv = if g { T::one() } else { T::zero() };
            -two * weight(i) * (gv * denom - inter) / d2
        })
        .collect();
    Ok((loss, grad))
}

/// Soft-Dice region-detection loss `1 − Dice` over probabilities.
pub fn region_loss<T: Real>(gt: &Mask, pred: &[T]) -> Result<T> {
    soft_dice(gt, pred, None).map(|(l, _)| l)
}

pub fn region_loss_grad<T: Real>(gt: &Mask, pred: &[T]) -> Result<(T, Vec<T>)> {
    soft_dice(gt, pred, None)
}

/// Boundary-weighted soft-Dice loss.
pub fn weighted_dice_loss<T: Real>(gt: &Mask, pred: &[T], w: &LossWeights) -> Result<T> {
    weighted_dice_loss_grad(gt, pred, w).map(|(l, _)| l)
}

pub fn weighted_dice_loss_grad<T: Real>(
    gt: &Mask,
    pred: &[T],
    w: &LossWeights,
) -> Result<(T, Vec<T>)> {
    let map: Vec<T> = weight_map(gt, w)?.into_iter().map(T::from_f64).collect();
    soft_dice(gt, pred, Some(&map))
}

/// Weighted soft-Dice with a precomputed weight map.
pub fn weighted_dice_with_map<T: Real>(
    gt: &Mask,
    pred: &[T],
    weights: &[T],
) -> Result<(T, Vec<T>)> {
    soft_dice(gt, pred, Some(weights))
}

/// Categorical cross-entropy `−ln p[true]`, probabilities floored at 1e-12.
pub fn classification_loss<T: Real>(true_class: usize, probs: &[T]) -> Result<(T, Vec<T>)> {
    if true_class >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "class {true_class} out of range for {} classes",
            probs.len()
        )));
    }
    let floor = T::from_f64(1e-12);
    let p = probs[true_class];
    let mut grad = vec![T::zero(); probs.len()];
    let loss = if p > floor {
        grad[true_class] = -T::one() / p;
        -p.ln()
    } else {
        -floor.ln()
    };
    Ok((loss, grad))
}

/// Cross-entropy of `softmax(logits)` via log-sum-exp, with its gradient
/// `softmax(logits) − onehot` w.r.t. the logits. Agrees with
/// [`classification_loss`] wherever the true-class probability is above its
/// floor.
pub fn classification_loss_from_logits<T: Real>(
    true_class: usize,
    logits: &[T],
) -> Result<(T, Vec<T>)> {
    if true_class >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "class {true_class} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let mut grad: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
    grad[true_class] -= T::one();
    Ok((lse - logits[true_class], grad))
}

/// `α₁·l_seg + α₂·l_cls`.
pub fn combined_loss(l_seg: f64, l_cls: f64, w: &LossWeights) -> f64 {
    w.alpha_seg * l_seg + w.alpha_cls * l_cls
}
