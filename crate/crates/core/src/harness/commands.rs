//! Library entry points behind the CLI subcommands. Each takes in-memory
//! inputs so tests can drive the pipeline without touching the filesystem.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::eval::{build_report, evaluate_fold, MetricsReport, Predictor};
use super::pipeline::{exec_of, main_items, region_items, Stage, Trained};
use super::roi::{extract_roi, RoiOutcome};
use super::train::TrainItem;
use crate::datapipe::{FoldPlan, Sample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgops::{Image, Mask};
use crate::lossmetrics::LossWeights;
use crate::nets::{
    build_mscmt_net, build_region_net, network_gradient_check, CascadeLevel, GradCheckReport,
    NetworkConfig, Target,
};

fn train_stage(
    stage: Stage,
    cfg: &RunConfig,
    items: &[TrainItem],
    resume: Option<&Checkpoint>,
) -> Result<Checkpoint> {
    let mut t = match resume {
        Some(ck) => {
            ck.check_fingerprint(cfg)?;
            if ck.stage != stage {
                return Err(Error::Config(format!(
                    "cannot resume a {:?} checkpoint as {stage:?}",
                    ck.stage
                )));
            }
            ck.to_trained()?
        }
        None => Trained::fresh(stage, cfg)?,
    };
    let target = t.target_epochs(cfg);
    if t.state.epoch > target {
        return Err(Error::Config(format!(
            "checkpoint is at epoch {}, beyond the configured {target}",
            t.state.epoch
        )));
    }
    t.train(items, cfg, |_, state| {
        log::info!(
            "{stage:?} fold {} epoch {}/{target}: loss {:.5}",
            cfg.fold,
            state.epoch,
            state.loss_trace.last().copied().unwrap_or(f64::NAN)
        );
        Ok(())
    })?;
    Ok(Checkpoint::from_trained(&t, cfg))
}

fn training_split<'a>(
    samples: &'a [Sample],
    plan: &FoldPlan,
    cfg: &RunConfig,
) -> Result<Vec<&'a Sample>> {
    let (train, _) = plan.split(samples, cfg.fold)?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    Ok(train)
}

fn check_extent(samples: &[&Sample], size: usize, what: &str) -> Result<()> {
    match samples.iter().find(|s| s.image.dims() != (size, size)) {
        Some(s) => Err(Error::data(
            &s.id,
            format!(
                "image is {:?}, the {what} expects {size}×{size}",
                s.image.dims()
            ),
        )),
        None => Ok(()),
    }
}

/// Trains the detector on every fold except `cfg.fold`, optionally
/// continuing from `resume`.
pub fn cmd_train_region(
    cfg: &RunConfig,
    samples: &[Sample],
    plan: &FoldPlan,
    resume: Option<&Checkpoint>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let train = training_split(samples, plan, cfg)?;
    check_extent(&train, cfg.image_size, "detector")?;
    train_stage(Stage::Region, cfg, &region_items(&train), resume)
}

/// Crops every sample around the detector's tumour estimate. Samples whose
/// window leaves the image are dropped (or clamped, per config).
pub fn cmd_extract_roi(ck: &Checkpoint, samples: &[Sample]) -> Result<RoiOutcome> {
    if ck.stage != Stage::Region {
        return Err(Error::Config(
            "ROI extraction needs a detector checkpoint".into(),
        ));
    }
    let cfg = &ck.config;
    let refs: Vec<&Sample> = samples.iter().collect();
    check_extent(&refs, cfg.image_size, "detector")?;
    let t = ck.to_trained()?;
    extract_roi(
        &t.net,
        samples,
        cfg.half_window,
        cfg.border_mode,
        cfg.empty_fallback,
        exec_of(cfg),
    )
}

/// Trains the multitask network on cropped samples of the training folds.
pub fn cmd_train_main(
    cfg: &RunConfig,
    cropped: &[Sample],
    plan: &FoldPlan,
    resume: Option<&Checkpoint>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let train = training_split(cropped, plan, cfg)?;
    check_extent(&train, cfg.crop_size(), "main network")?;
    train_stage(Stage::Main, cfg, &main_items(&train, cfg)?, resume)
}

/// Evaluates one predictor per held-out fold and averages over folds.
pub fn evaluate_predictors(
    predictors: &[(usize, &dyn Predictor)],
    samples: &[Sample],
    plan: &FoldPlan,
    config_fingerprint: String,
    exec: Exec,
) -> Result<MetricsReport> {
    let t = Instant::now();
    let folds = predictors
        .iter()
        .map(|&(fold, p)| {
            let (_, test) = plan.split(samples, fold)?;
            evaluate_fold(p, &test, fold, exec)
        })
        .collect::<Result<Vec<_>>>()?;
    build_report(folds, config_fingerprint, t.elapsed().as_secs_f64())
}

/// Evaluates each checkpoint on its own held-out fold.
pub fn cmd_evaluate(
    checkpoints: &[Checkpoint],
    samples: &[Sample],
    plan: &FoldPlan,
) -> Result<MetricsReport> {
    let first = checkpoints.first().ok_or(Error::Empty("checkpoint list"))?;
    let nets = checkpoints
        .iter()
        .map(|ck| Ok((ck.config.fold, ck.to_trained()?.net)))
        .collect::<Result<Vec<_>>>()?;
    let predictors: Vec<(usize, &dyn Predictor)> = nets
        .iter()
        .map(|(f, n)| (*f, n as &dyn Predictor))
        .collect();
    evaluate_predictors(
        &predictors,
        samples,
        plan,
        first.config.fingerprint_hex(),
        exec_of(&first.config),
    )
}

/// One finite-difference check per network chain.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub chain: String,
    pub report: GradCheckReport,
}

fn disc(size: usize, radius: f64) -> Mask {
    let c = (size as f64 - 1.0) / 2.0;
    let pts: Vec<(usize, usize)> = (0..size)
        .flat_map(|r| (0..size).map(move |col| (r, col)))
        .filter(|&(r, col)| {
            let (dr, dc) = (r as f64 - c, col as f64 - c);
            dr * dr + dc * dc <= radius * radius
        })
        .collect();
    Mask::from_points(size, size, &pts)
}

/// Double-precision gradient checks of the detector and of the multitask
/// network at every cascade level, on `n` coordinates each.
pub fn cmd_gradcheck(seed: u64, n: usize) -> Result<Vec<GradCheckEntry>> {
    const SIZE: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Image::new(
        SIZE,
        SIZE,
        (0..SIZE * SIZE).map(|_| rng.random::<f32>()).collect(),
    )?;
    let mask = disc(SIZE, 5.0);
    let map = disc(SIZE, 4.0).to_image();
    let target = Target {
        mask: &mask,
        label: 1,
        weights: None,
    };
    let w = LossWeights::default();

    let mut out = Vec::new();
    let region = build_region_net::<f64>(&NetworkConfig::region(SIZE, [2, 3, 4, 4]), seed)?;
    out.push(GradCheckEntry {
        chain: "region".into(),
        report: network_gradient_check(&region, &img, None, target, &w, n, seed)?,
    });
    for level in [CascadeLevel::None, CascadeLevel::Common, CascadeLevel::Full] {
        let cfg = NetworkConfig {
            input_size: SIZE,
            base_channels: [2, 3, 4, 4],
            cascade_level: level,
            fc_hidden: 5,
            ..NetworkConfig::default()
        };
        let net = build_mscmt_net::<f64>(&cfg, seed)?;
        let map = cfg.uses_map().then_some(&map);
        out.push(GradCheckEntry {
            chain: format!("mscmt-{level}"),
            report: network_gradient_check(&net, &img, map, target, &w, n, seed)?,
        });
    }
    Ok(out)
}
