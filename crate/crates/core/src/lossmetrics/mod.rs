//! Training objectives (soft Dice, boundary-weighted Dice, cross-entropy,
//! the 2:1 combined loss) and evaluation metrics (hard Dice, IoU, mean IoU,
//! confusion matrix with per-class row rates).

mod losses;
mod metrics;

pub use losses::{
    classification_loss, classification_loss_from_logits, combined_loss, region_loss,
    region_loss_grad, weight_map, weight_map_with, weighted_dice_loss, weighted_dice_loss_grad,
    weighted_dice_with_map, LossWeights, WeightForm,
};
pub use metrics::{
    classification_accuracy, confusion_and_rates, dice, iou, mean_iou, pixel_accuracy,
    pixel_counts, ClassRates, ConfusionMatrix, PixelCounts,
};
