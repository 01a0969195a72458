use super::network::{NetKind, Network, Outputs};
use crate::diffcore::{Real, Tape, Var};
use crate::error::Result;
use crate::imgops::{Image, Mask};
use crate::lossmetrics::{
    classification_loss_from_logits, region_loss_grad, weight_map, weighted_dice_with_map,
    LossWeights,
};

/// One training example as the objective sees it.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub mask: &'a Mask,
    pub label: usize,
    /// Precomputed boundary weights; computed on demand when absent.
    pub weights: Option<&'a [f64]>,
}

/// Per-term values of a recorded objective.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub seg: f64,
    pub cls: Option<f64>,
}

/// Records the training objective for `out` on `tape`.
///
/// The region net is trained with plain soft Dice. The main net uses the
/// boundary-weighted Dice, plus `α_cls`-weighted cross-entropy when the
/// class head exists; the segmentation term is scaled by `α_seg`.
/// Cross-entropy is evaluated from the logits (unfloored).
pub fn record_objective<T: Real>(
    net: &Network<T>,
    tape: &mut Tape<'_, T>,
    out: &Outputs,
    target: Target<'_>,
    w: &LossWeights,
) -> Result<LossTerms> {
    let pred = tape.value(out.seg).to_vec();
    match net.kind() {
        NetKind::Region => {
            let (l, g) = region_loss_grad(target.mask, &pred)?;
            let total = tape.loss(out.seg, l, g)?;
            Ok(LossTerms {
                total,
                seg: l.as_f64(),
                cls: None,
            })
        }
        NetKind::Mscmt => {
            let owned;
            let wmap = match target.weights {
                Some(m) => m,
                None => {
                    owned = weight_map(target.mask, w)?;
                    &owned
                }
            };
            let wmap: Vec<T> = wmap.iter().map(|&v| T::from_f64(v)).collect();
            let (l, g) = weighted_dice_with_map(target.mask, &pred, &wmap)?;
            let seg = tape.loss(out.seg, l, g)?;
            let mut terms = vec![(seg, T::from_f64(w.alpha_seg))];
            let mut cls = None;
            if let Some(z) = out.class_logits {
                // taken on the logits: the gradient p − onehot never vanishes,
                // unlike −1/p through a saturated softmax
                let logits = tape.value(z).to_vec();
                let (lc, gc) = classification_loss_from_logits(target.label, &logits)?;
                let c = tape.loss(z, lc, gc)?;
                terms.push((c, T::from_f64(w.alpha_cls)));
                cls = Some(lc.as_f64());
            }
            let total = tape.combine(&terms)?;
            Ok(LossTerms {
                total,
                seg: l.as_f64(),
                cls,
            })
        }
    }
}

/// Scalar objective value without gradients.
pub fn objective_value<T: Real>(
    net: &Network<T>,
    img: &Image,
    map: Option<&Image>,
    target: Target<'_>,
    w: &LossWeights,
) -> Result<f64> {
    let mut tape = Tape::new(net.params());
    let out = net.forward(&mut tape, img, map)?;
    let terms = record_objective(net, &mut tape, &out, target, w)?;
    Ok(tape.scalar(terms.total).as_f64())
}
