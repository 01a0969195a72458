use std::time::Instant;

use serde::Serialize;

use super::config::RunConfig;
use super::eval::{build_report, evaluate_fold, FoldMetrics, MetricsReport};
use super::roi::{extract_roi, RoiOutcome};
use super::train::{train_epochs, Hyper, TrainItem, TrainState};
use crate::datapipe::{patient_kfold, preprocess_sample, stratified_kfold, FoldPlan, Sample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lossmetrics::weight_map_with;
use crate::nets::{build_mscmt_net, build_region_net, Network};

/// Which network a training stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Region,
    Main,
}

impl Stage {
    pub fn code(self) -> u8 {
        match self {
            Stage::Region => 1,
            Stage::Main => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Stage::Region),
            2 => Some(Stage::Main),
            _ => None,
        }
    }

    /// Independent generator stream per stage and fold.
    pub fn stream(self, fold: usize) -> u64 {
        2 * fold as u64 + self.code() as u64
    }

    /// Weight-initialization seed per stage and fold.
    pub fn init_seed(self, cfg: &RunConfig) -> u64 {
        cfg.seed
            .wrapping_mul(1_000_003)
            .wrapping_add(self.stream(cfg.fold))
    }
}

pub fn exec_of(cfg: &RunConfig) -> Exec {
    if cfg.parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

pub fn hyper_of(cfg: &RunConfig) -> Hyper {
    Hyper {
        lr: cfg.lr,
        momentum: cfg.momentum,
        batch_size: cfg.batch_size,
        grad_clip: cfg.grad_clip,
        loss: cfg.loss,
        exec: exec_of(cfg),
    }
}

/// Applies the enhancement step when the config asks for it.
pub fn prepare(samples: &[Sample], cfg: &RunConfig) -> Result<Vec<Sample>> {
    if !cfg.enhance {
        return Ok(samples.to_vec());
    }
    exec_of(cfg)
        .map(samples, |s| preprocess_sample(s, &cfg.preprocess))
        .into_iter()
        .collect()
}

pub fn fold_plan(samples: &[Sample], cfg: &RunConfig) -> Result<FoldPlan> {
    if cfg.patient_disjoint {
        patient_kfold(samples, cfg.folds, cfg.seed)
    } else {
        stratified_kfold(samples, cfg.folds, cfg.seed)
    }
}

pub fn region_items(samples: &[&Sample]) -> Vec<TrainItem> {
    samples
        .iter()
        .map(|s| TrainItem {
            image: s.image.clone(),
            map: None,
            mask: s.mask.clone(),
            label: s.label,
            weights: None,
        })
        .collect()
}

/// Training items for the main net. Crops whose ground truth is empty (the
/// detector centred on a false positive) get uniform weights.
pub fn main_items(samples: &[&Sample], cfg: &RunConfig) -> Result<Vec<TrainItem>> {
    let needs_map = cfg.network.uses_map();
    samples
        .iter()
        .map(|s| {
            if needs_map && s.prelim.is_none() {
                return Err(Error::Config(format!(
                    "cascade level `{}` needs preliminary maps but `{}` has none",
                    cfg.network.cascade_level, s.id
                )));
            }
            let weights = if s.mask.is_empty() {
                vec![1.0; s.mask.height() * s.mask.width()]
            } else {
                weight_map_with(&s.mask, &cfg.loss, cfg.weight_form)?
            };
            Ok(TrainItem {
                image: s.image.clone(),
                map: s.prelim.clone(),
                mask: s.mask.clone(),
                label: s.label,
                weights: Some(weights),
            })
        })
        .collect()
}

/// A network together with the state needed to continue training it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub stage: Stage,
    pub net: Network<f32>,
    pub state: TrainState,
}

impl Trained {
    pub fn fresh(stage: Stage, cfg: &RunConfig) -> Result<Self> {
        let net = match stage {
            Stage::Region => build_region_net(&cfg.region_network(), stage.init_seed(cfg))?,
            Stage::Main => build_mscmt_net(&cfg.network, stage.init_seed(cfg))?,
        };
        Ok(Trained {
            stage,
            net,
            state: TrainState::new(cfg.seed, stage.stream(cfg.fold)),
        })
    }

    pub fn target_epochs(&self, cfg: &RunConfig) -> usize {
        match self.stage {
            Stage::Region => cfg.region_epochs,
            Stage::Main => cfg.epochs,
        }
    }

    /// Continues until the configured epoch count.
    pub fn train(
        &mut self,
        items: &[TrainItem],
        cfg: &RunConfig,
        on_epoch: impl FnMut(&Network<f32>, &TrainState) -> Result<()>,
    ) -> Result<()> {
        let until = self.target_epochs(cfg);
        train_epochs(
            &mut self.net,
            items,
            &hyper_of(cfg),
            &mut self.state,
            until,
            on_epoch,
        )
    }
}

/// Everything one held-out fold produced.
#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Detector on full-resolution held-out images.
    pub region: FoldMetrics,
    /// Main network on held-out crops.
    pub main: FoldMetrics,
    pub region_loss_trace: Vec<f64>,
    pub main_loss_trace: Vec<f64>,
    pub dropped: Vec<String>,
    pub empty_predictions: Vec<String>,
}

/// Trains the detector on the training folds, crops every sample with it,
/// trains the main network on the training crops and evaluates both on the
/// held-out fold. `samples` must already be prepared.
pub fn run_fold(cfg: &RunConfig, samples: &[Sample], plan: &FoldPlan) -> Result<FoldOutcome> {
    let (train, test) = plan.split(samples, cfg.fold)?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let exec = exec_of(cfg);
    let t = Instant::now();
    let mut region = Trained::fresh(Stage::Region, cfg)?;
    region.train(&region_items(&train), cfg, |_, _| Ok(()))?;
    log::info!(
        "fold {}: detector trained in {:.1}s",
        cfg.fold,
        t.elapsed().as_secs_f64()
    );
    let region_metrics = evaluate_fold(&region.net, &test, cfg.fold, exec)?;

    let roi = |set: &[&Sample]| -> Result<RoiOutcome> {
        let owned: Vec<Sample> = set.iter().map(|s| (*s).clone()).collect();
        extract_roi(
            &region.net,
            &owned,
            cfg.half_window,
            cfg.border_mode,
            cfg.empty_fallback,
            exec,
        )
    };
    let train_roi = roi(&train)?;
    let test_roi = roi(&test)?;

    let mut main = Trained::fresh(Stage::Main, cfg)?;
    let train_refs: Vec<&Sample> = train_roi.kept.iter().collect();
    main.train(&main_items(&train_refs, cfg)?, cfg, |_, _| Ok(()))?;
    log::info!(
        "fold {}: main network trained after {:.1}s",
        cfg.fold,
        t.elapsed().as_secs_f64()
    );
    let test_refs: Vec<&Sample> = test_roi.kept.iter().collect();
    let main_metrics = evaluate_fold(&main.net, &test_refs, cfg.fold, exec)?;

    let mut dropped = train_roi.dropped;
    dropped.extend(test_roi.dropped);
    let mut empty = train_roi.empty_predictions;
    empty.extend(test_roi.empty_predictions);
    Ok(FoldOutcome {
        fold: cfg.fold,
        region: region_metrics,
        main: main_metrics,
        region_loss_trace: region.state.loss_trace,
        main_loss_trace: main.state.loss_trace,
        dropped,
        empty_predictions: empty,
    })
}

/// Cross-validation summary for both networks.
#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    pub region: MetricsReport,
    pub main: MetricsReport,
    pub folds: Vec<FoldOutcome>,
}

/// Runs [`run_fold`] for every fold of `plan` on prepared samples.
pub fn cross_validate(
    cfg: &RunConfig,
    samples: &[Sample],
    plan: &FoldPlan,
) -> Result<CrossValidation> {
    let t = Instant::now();
    let mut outcomes = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let fold_cfg = RunConfig {
            fold,
            ..cfg.clone()
        };
        outcomes.push(run_fold(&fold_cfg, samples, plan)?);
    }
    let wall = t.elapsed().as_secs_f64();
    let fp = cfg.fingerprint_hex();
    Ok(CrossValidation {
        region: build_report(
            outcomes.iter().map(|o| o.region.clone()).collect(),
            fp.clone(),
            wall,
        )?,
        main: build_report(outcomes.iter().map(|o| o.main.clone()).collect(), fp, wall)?,
        folds: outcomes,
    })
}
