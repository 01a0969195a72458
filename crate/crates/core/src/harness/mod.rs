//! Pipeline orchestration: run configuration, training with checkpoints,
//! ROI extraction, evaluation reports and the ablation ladder.

mod ablation;
mod checkpoint;
mod commands;
mod config;
mod eval;
mod pipeline;
mod roi;
mod train;

pub use ablation::{
    ablation_config, cmd_ablate, AblationReport, AblationRow, AblationTable, Reference,
    ABLATION_SAMPLES, ABLATION_SEED,
};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use commands::{
    cmd_evaluate, cmd_extract_roi, cmd_gradcheck, cmd_train_main, cmd_train_region,
    evaluate_predictors, GradCheckEntry,
};
pub use config::{EmptyFallback, RunConfig};
pub use eval::{
    build_report, evaluate_fold, Aggregate, FoldMetrics, MetricsReport, Predictor, SampleMetrics,
    SamplePrediction,
};
pub use pipeline::{
    cross_validate, exec_of, fold_plan, hyper_of, main_items, prepare, region_items, run_fold,
    CrossValidation, FoldOutcome, Stage, Trained,
};
pub use roi::{extract_roi, roi_center, RoiOutcome, RoiSource};
pub use train::{train_epochs, train_step, Hyper, TrainItem, TrainState};
