use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use mscmt::datapipe::{
    import_external_dataset, load_manifest_with, save_manifest, synth_generate_with, FoldPlan,
    ImportKeys, Sample,
};
use mscmt::harness::{
    ablation_config, cmd_ablate, cmd_evaluate, cmd_extract_roi, cmd_gradcheck, cmd_train_main,
    cmd_train_region, exec_of, fold_plan, prepare, Checkpoint, RunConfig, ABLATION_SAMPLES,
};
use mscmt::{Error, Result};

/// Brain-tumour segmentation and classification pipeline.
#[derive(Debug, Parser)]
#[command(name = "mscmt", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (`key = value` lines over the desk defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the held-out fold.
    #[arg(long, global = true)]
    fold: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// With `false` and no `--seed`, the seed is drawn from the clock.
    #[arg(long, global = true, default_value_t = true, action = clap::ArgAction::Set)]
    deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic phantoms and their manifest.
    SynthGen {
        #[arg(long, default_value_t = 600)]
        n: usize,
        /// Side length; defaults to the config's image size.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Convert a directory of JSON records into a manifest.
    Import {
        #[arg(long)]
        input: PathBuf,
        /// JSON file overriding the record keys and label map.
        #[arg(long)]
        keys: Option<PathBuf>,
    },
    /// Median filter + CLAHE (when `enhance = true`).
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the region detector on the training folds.
    TrainRegion {
        #[arg(long)]
        manifest: PathBuf,
        /// Fold plan JSON; computed from the manifest and saved when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Crop every sample around the detected tumour.
    ExtractRoi {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the multiscale cascaded multitask network on crops.
    TrainMain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate checkpoints on their held-out folds.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run the ablation ladder; without a manifest uses the pinned setup.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Finite-difference gradient checks of the network chains.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
}

fn read_config(c: &Common, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply(&text)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    } else if !c.deterministic {
        cfg.seed = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        log::info!("non-deterministic run, seed {}", cfg.seed);
    }
    if let Some(fold) = c.fold {
        cfg.fold = fold;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load(path: &Path, cfg: &RunConfig) -> Result<Vec<Sample>> {
    load_manifest_with(path, exec_of(cfg))
}

fn plan_for(
    path: Option<&Path>,
    samples: &[Sample],
    cfg: &RunConfig,
    out: &Path,
) -> Result<FoldPlan> {
    match path {
        Some(p) => FoldPlan::load(p),
        None => {
            let plan = fold_plan(samples, cfg)?;
            plan.save(&out.join("folds.json"))?;
            Ok(plan)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let out = &c.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match &cli.cmd {
        Command::SynthGen { n, size } => {
            let cfg = read_config(c, RunConfig::desk())?;
            let size = size.unwrap_or(cfg.image_size);
            let samples = synth_generate_with(*n, cfg.seed, size, exec_of(&cfg))?;
            save_manifest(&out.join("manifest.csv"), &samples)?;
            println!("{} phantoms written to {}", samples.len(), out.display());
        }
        Command::Import { input, keys } => {
            let keys = match keys {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_str::<ImportKeys>(&text)?
                }
                None => ImportKeys::default(),
            };
            let (_, summary) = import_external_dataset(input, &keys, &out.join("manifest.csv"))?;
            write_json(&out.join("import.json"), &summary)?;
            println!("imported {}, skipped {}", summary.imported, summary.skipped);
        }
        Command::Preprocess { manifest } => {
            let cfg = read_config(c, RunConfig::desk())?;
            let samples = prepare(&load(manifest, &cfg)?, &cfg)?;
            save_manifest(&out.join("manifest.csv"), &samples)?;
            println!("{} samples preprocessed", samples.len());
        }
        Command::TrainRegion {
            manifest,
            plan,
            resume,
        } => {
            let cfg = read_config(c, RunConfig::desk())?;
            let samples = load(manifest, &cfg)?;
            let plan = plan_for(plan.as_deref(), &samples, &cfg, out)?;
            let resume = resume.as_deref().map(Checkpoint::load).transpose()?;
            let ck = cmd_train_region(&cfg, &samples, &plan, resume.as_ref())?;
            let stem = format!("region-fold{}", cfg.fold);
            ck.save(&out.join(format!("{stem}.ckpt")))?;
            write_json(&out.join(format!("{stem}-loss.json")), &ck.state.loss_trace)?;
            println!("detector checkpoint at epoch {} written", ck.epoch());
        }
        Command::ExtractRoi {
            checkpoint,
            manifest,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let samples = load(manifest, &ck.config)?;
            let roi = cmd_extract_roi(&ck, &samples)?;
            save_manifest(&out.join("manifest.csv"), &roi.kept)?;
            write_json(
                &out.join("roi.json"),
                &serde_json::json!({
                    "kept": roi.kept.len(),
                    "dropped": roi.dropped,
                    "empty_predictions": roi.empty_predictions,
                }),
            )?;
            println!("{} kept, {} dropped", roi.kept.len(), roi.dropped.len());
        }
        Command::TrainMain {
            manifest,
            plan,
            resume,
        } => {
            let cfg = read_config(c, RunConfig::desk())?;
            let samples = load(manifest, &cfg)?;
            let plan = FoldPlan::load(plan)?;
            let resume = resume.as_deref().map(Checkpoint::load).transpose()?;
            let ck = cmd_train_main(&cfg, &samples, &plan, resume.as_ref())?;
            let stem = format!("main-fold{}", cfg.fold);
            ck.save(&out.join(format!("{stem}.ckpt")))?;
            write_json(&out.join(format!("{stem}-loss.json")), &ck.state.loss_trace)?;
            println!("main checkpoint at epoch {} written", ck.epoch());
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            plan,
        } => {
            let cks = checkpoint
                .iter()
                .map(|p| Checkpoint::load(p))
                .collect::<Result<Vec<_>>>()?;
            let samples = load(manifest, &cks[0].config)?;
            let report = cmd_evaluate(&cks, &samples, &FoldPlan::load(plan)?)?;
            write(&out.join("report.json"), &report.to_json()?)?;
            let a = &report.aggregate;
            println!(
                "DSC {:.4}  IoU {:.4}  mean IoU {:.4}  accuracy {}",
                a.dice,
                a.iou,
                a.mean_iou,
                a.accuracy.map_or("-".into(), |x| format!("{x:.4}"))
            );
        }
        Command::Ablate { manifest } => {
            let cfg = read_config(c, ablation_config())?;
            let samples = match manifest {
                Some(m) => load(m, &cfg)?,
                None => {
                    synth_generate_with(ABLATION_SAMPLES, cfg.seed, cfg.image_size, exec_of(&cfg))?
                }
            };
            let report = cmd_ablate(&cfg, &samples)?;
            let text = report.render_text();
            write(&out.join("ablation.json"), &report.to_json()?)?;
            write(&out.join("ablation.txt"), &text)?;
            print!("{text}");
        }
        Command::Gradcheck { points } => {
            let cfg = read_config(c, RunConfig::desk())?;
            let entries = cmd_gradcheck(cfg.seed, *points)?;
            write_json(&out.join("gradcheck.json"), &entries)?;
            let mut worst: f64 = 0.0;
            for e in &entries {
                println!(
                    "{:<14} max rel {:.2e} over {} coords, flat abs {:.2e}",
                    e.chain,
                    e.report.max_relative_error,
                    e.report.coords.len(),
                    e.report.max_flat_abs_error
                );
                worst = worst.max(e.report.max_relative_error);
            }
            if worst > 1e-4 {
                return Err(Error::Numeric(format!(
                    "gradient check failed: relative error {worst:.2e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
