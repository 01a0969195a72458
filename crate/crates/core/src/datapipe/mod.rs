//! Dataset records, manifest I/O, the external-dataset importer, synthetic
//! phantoms, stratified folds and the enhancement preprocessing step.

mod folds;
mod import;
mod manifest;
mod preprocess;
mod sample;
mod synth;

pub use folds::{patient_kfold, stratified_kfold, stratified_kfold_ids, FoldPlan};
pub use import::{import_external_dataset, ImportKeys, ImportSummary};
pub use manifest::{load_manifest, load_manifest_with, save_manifest};
pub use preprocess::{preprocess_sample, PreprocessParams};
pub use sample::{Sample, CLASS_NAMES, NUM_CLASSES};
pub use synth::{synth_generate, synth_generate_with};
