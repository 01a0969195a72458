use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datapipe::PreprocessParams;
use crate::error::{Error, Result};
use crate::imgops::{BorderMode, ClaheParams};
use crate::lossmetrics::{LossWeights, WeightForm};
use crate::nets::{CascadeLevel, NetworkConfig};

/// What ROI extraction does when the detector predicts nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyFallback {
    /// Crop around the image centre.
    Center,
    /// Exclude the sample like a border drop.
    Skip,
}

/// Every knob of a run. Serialized as flat `key = value` text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Main-network epochs.
    pub epochs: usize,
    pub region_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling per step; `0` disables clipping.
    pub grad_clip: f64,
    pub folds: usize,
    /// Held-out fold.
    pub fold: usize,
    pub patient_disjoint: bool,
    pub enhance: bool,
    pub preprocess: PreprocessParams,
    pub image_size: usize,
    pub half_window: usize,
    pub border_mode: BorderMode,
    pub empty_fallback: EmptyFallback,
    pub region_channels: [usize; 4],
    pub network: NetworkConfig,
    pub loss: LossWeights,
    pub weight_form: WeightForm,
    /// Fan per-sample gradients out over the thread pool. Results do not
    /// depend on it.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            epochs: 30,
            region_epochs: 30,
            lr: 0.001,
            momentum: 0.9,
            batch_size: 4,
            grad_clip: 0.0,
            folds: 5,
            fold: 0,
            patient_disjoint: false,
            enhance: true,
            preprocess: PreprocessParams::default(),
            image_size: 128,
            half_window: 32,
            border_mode: BorderMode::Drop,
            empty_fallback: EmptyFallback::Center,
            region_channels: [4, 8, 16, 32],
            network: NetworkConfig {
                input_size: 64,
                ..NetworkConfig::default()
            },
            loss: LossWeights::default(),
            weight_form: WeightForm::Gaussian,
            parallel: true,
        }
    }
}

/// Keys left out of the fingerprint: they change how long or how a run
/// executes, not what it computes per step.
const UNFINGERPRINTED: [&str; 3] = ["epochs", "region_epochs", "parallel"];

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{v}` for `{key}`"))),
    }
}

fn parse_channels(key: &str, v: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = v
        .split(',')
        .map(|p| parse(key, p.trim()))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::Config(format!("`{key}` needs four comma-separated widths")))
}

fn join(c: &[usize; 4]) -> String {
    c.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Settings that learn within a desk-scale budget: the published
    /// lr = 0.001 barely moves a from-scratch net in a few thousand steps,
    /// so the rate is raised and steps are norm-clipped for stability.
    pub fn desk() -> Self {
        RunConfig {
            lr: 0.01,
            grad_clip: 1.0,
            region_epochs: 8,
            epochs: 15,
            region_channels: [4, 8, 16, 32],
            ..RunConfig::default()
        }
    }

    /// Desk-scale crop size `2h`.
    pub fn crop_size(&self) -> usize {
        2 * self.half_window
    }

    pub fn region_network(&self) -> NetworkConfig {
        NetworkConfig::region(self.image_size, self.region_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.region_epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "need lr > 0 and momentum in [0, 1), got {} / {}",
                self.lr, self.momentum
            )));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.folds < 2 || self.fold >= self.folds {
            return Err(Error::Config(format!(
                "fold {} of {} is not valid",
                self.fold, self.folds
            )));
        }
        if self.network.input_size != self.crop_size() {
            return Err(Error::Config(format!(
                "network input_size {} must equal the crop size 2·half_window = {}",
                self.network.input_size,
                self.crop_size()
            )));
        }
        if self.crop_size() > self.image_size {
            return Err(Error::Config("crop larger than the image".into()));
        }
        self.network.validate()?;
        self.region_network().validate()?;
        self.loss.validate()
    }

    /// Canonical text form; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .fold(String::new(), |mut s, (k, v)| {
                let _ = writeln!(s, "{k} = {v}");
                s
            })
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let n = &self.network;
        let p = &self.preprocess;
        vec![
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("region_epochs", self.region_epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("folds", self.folds.to_string()),
            ("fold", self.fold.to_string()),
            ("patient_disjoint", self.patient_disjoint.to_string()),
            ("enhance", self.enhance.to_string()),
            ("median_kernel", p.median_kernel.to_string()),
            (
                "clahe_tiles",
                format!("{},{}", p.clahe.tile_rows, p.clahe.tile_cols),
            ),
            ("clahe_clip", p.clahe.clip_limit.to_string()),
            ("clahe_bins", p.clahe.bins.to_string()),
            ("image_size", self.image_size.to_string()),
            ("half_window", self.half_window.to_string()),
            (
                "border_mode",
                match self.border_mode {
                    BorderMode::Drop => "drop",
                    BorderMode::Clamp => "clamp",
                }
                .into(),
            ),
            (
                "empty_fallback",
                match self.empty_fallback {
                    EmptyFallback::Center => "center",
                    EmptyFallback::Skip => "skip",
                }
                .into(),
            ),
            ("region_channels", join(&self.region_channels)),
            ("base_channels", join(&n.base_channels)),
            ("multiscale", n.multiscale.to_string()),
            ("cascade_level", n.cascade_level.to_string()),
            ("multitask", n.multitask.to_string()),
            ("aggregation", n.aggregation.to_string()),
            ("fc_hidden", n.fc_hidden.to_string()),
            ("alpha_seg", self.loss.alpha_seg.to_string()),
            ("alpha_cls", self.loss.alpha_cls.to_string()),
            ("omega0", self.loss.omega0.to_string()),
            ("sigma", self.loss.sigma.to_string()),
            (
                "weight_form",
                match self.weight_form {
                    WeightForm::Gaussian => "gaussian",
                    WeightForm::AsPrinted => "as_printed",
                }
                .into(),
            ),
            ("parallel", self.parallel.to_string()),
        ]
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "region_epochs" => self.region_epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "fold" => self.fold = parse(key, v)?,
            "patient_disjoint" => self.patient_disjoint = parse_bool(key, v)?,
            "enhance" => self.enhance = parse_bool(key, v)?,
            "median_kernel" => self.preprocess.median_kernel = parse(key, v)?,
            "clahe_tiles" => {
                let (r, c) = v
                    .split_once(',')
                    .ok_or_else(|| Error::Config("`clahe_tiles` needs `rows,cols`".into()))?;
                self.preprocess.clahe = ClaheParams {
                    tile_rows: parse(key, r.trim())?,
                    tile_cols: parse(key, c.trim())?,
                    ..self.preprocess.clahe
                };
            }
            "clahe_clip" => self.preprocess.clahe.clip_limit = parse(key, v)?,
            "clahe_bins" => self.preprocess.clahe.bins = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "half_window" => {
                self.half_window = parse(key, v)?;
                self.network.input_size = self.crop_size();
            }
            "border_mode" => {
                self.border_mode = match v {
                    "drop" => BorderMode::Drop,
                    "clamp" => BorderMode::Clamp,
                    _ => return Err(Error::Config(format!("unknown border_mode `{v}`"))),
                }
            }
            "empty_fallback" => {
                self.empty_fallback = match v {
                    "center" => EmptyFallback::Center,
                    "skip" => EmptyFallback::Skip,
                    _ => return Err(Error::Config(format!("unknown empty_fallback `{v}`"))),
                }
            }
            "region_channels" => self.region_channels = parse_channels(key, v)?,
            "base_channels" => self.network.base_channels = parse_channels(key, v)?,
            "multiscale" => self.network.multiscale = parse_bool(key, v)?,
            "cascade_level" => self.network.cascade_level = v.parse::<CascadeLevel>()?,
            "multitask" => self.network.multitask = parse_bool(key, v)?,
            "aggregation" => self.network.aggregation = parse_bool(key, v)?,
            "fc_hidden" => self.network.fc_hidden = parse(key, v)?,
            "alpha_seg" => self.loss.alpha_seg = parse(key, v)?,
            "alpha_cls" => self.loss.alpha_cls = parse(key, v)?,
            "omega0" => self.loss.omega0 = parse(key, v)?,
            "sigma" => self.loss.sigma = parse(key, v)?,
            "weight_form" => {
                self.weight_form = match v {
                    "gaussian" => WeightForm::Gaussian,
                    "as_printed" => WeightForm::AsPrinted,
                    _ => return Err(Error::Config(format!("unknown weight_form `{v}`"))),
                }
            }
            "parallel" => self.parallel = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` given twice", n + 1)));
            }
            self.set(k, v.trim())?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over the canonical entries that affect a training step.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNFINGERPRINTED.contains(&k) {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        h.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.network.cascade_level = CascadeLevel::Common;
        cfg.preprocess.clahe.tile_rows = 4;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_repeated_keys_fail() {
        assert!(RunConfig::parse("learning_rate = 0.1").is_err());
        assert!(RunConfig::parse("lr = 0.1\nlr = 0.2").is_err());
        assert!(RunConfig::parse("lr").is_err());
        assert!(RunConfig::parse("epochs = 0").is_err());
        assert!(RunConfig::parse("lr = -1").is_err());
        assert!(RunConfig::parse("batch_size = 0").is_err());
        assert!(RunConfig::parse("# comment only\n\nseed = 3 # trailing").is_ok());
    }

    #[test]
    fn fingerprint_ignores_duration_but_not_architecture() {
        let a = RunConfig::default();
        let b = RunConfig {
            epochs: 99,
            parallel: false,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.network.base_channels = [4, 8, 16, 32];
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint_hex().len(), 64);
    }
}
