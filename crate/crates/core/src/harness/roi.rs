use serde::Serialize;

use super::config::EmptyFallback;
use crate::datapipe::Sample;
use crate::error::Result;
use crate::exec::Exec;
use crate::imgops::{
    center_of_gravity, convex_hull_fill, crop_mask, crop_window, largest_component, round_center,
    BorderMode, Crop, Image, Mask,
};
use crate::nets::Network;

/// Where a sample's crop window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiSource {
    Detected,
    /// Empty prediction, image-centre fallback.
    CenterFallback,
}

#[derive(Debug, Clone, Default)]
pub struct RoiOutcome {
    /// Cropped samples carrying the cropped preliminary map, in input order.
    pub kept: Vec<Sample>,
    pub sources: Vec<RoiSource>,
    /// Ids excluded by the border rule (or by an empty prediction under
    /// `EmptyFallback::Skip`).
    pub dropped: Vec<String>,
    pub empty_predictions: Vec<String>,
}

/// Detected window center: threshold, keep the largest component, fill its
/// convex hull, take the rounded centre of gravity. `None` if nothing is
/// predicted.
pub fn roi_center(prob: &Image) -> Result<Option<(usize, usize)>> {
    let Some(largest) = largest_component(&prob.threshold(0.5)) else {
        return Ok(None);
    };
    let filled = convex_hull_fill(&largest)?;
    Ok(Some(round_center(center_of_gravity(&filled)?)))
}

enum One {
    Kept(Sample, RoiSource),
    Dropped { empty: bool },
}

fn crop_one(
    net: &Network<f32>,
    s: &Sample,
    half_window: usize,
    mode: BorderMode,
    fallback: EmptyFallback,
) -> Result<One> {
    let pred = net.predict(&s.image, None)?;
    let (h, w) = s.image.dims();
    let prob = Image::from_clamped(h, w, pred.seg_map.iter().map(|&v| v as f32).collect())?;
    let (center, source) = match roi_center(&prob)? {
        Some(c) => (c, RoiSource::Detected),
        None => match fallback {
            EmptyFallback::Center => ((h / 2, w / 2), RoiSource::CenterFallback),
            EmptyFallback::Skip => return Ok(One::Dropped { empty: true }),
        },
    };
    Ok(
        match crop_window(&s.image, &prob, center, half_window, mode)? {
            Crop::Kept {
                bbox,
                crops: (image, map),
            } => {
                let mask: Mask = crop_mask(&s.mask, &bbox);
                let cropped = Sample {
                    image,
                    mask,
                    prelim: Some(map),
                    ..s.clone()
                };
                One::Kept(cropped, source)
            }
            Crop::Dropped => One::Dropped {
                empty: source == RoiSource::CenterFallback,
            },
        },
    )
}

/// Runs the region detector over `samples` and crops image, probability map
/// and ground truth to the `2h×2h` window around the detected tumour.
pub fn extract_roi(
    net: &Network<f32>,
    samples: &[Sample],
    half_window: usize,
    mode: BorderMode,
    fallback: EmptyFallback,
    exec: Exec,
) -> Result<RoiOutcome> {
    let results = exec.map(samples, |s| crop_one(net, s, half_window, mode, fallback));
    let mut out = RoiOutcome::default();
    for (s, r) in samples.iter().zip(results) {
        match r? {
            One::Kept(c, src) => {
                if src == RoiSource::CenterFallback {
                    out.empty_predictions.push(s.id.clone());
                    log::warn!("{}: empty prediction, using the centre crop", s.id);
                }
                out.kept.push(c);
                out.sources.push(src);
            }
            One::Dropped { empty } => {
                if empty {
                    out.empty_predictions.push(s.id.clone());
                }
                log::info!("{}: dropped by ROI extraction", s.id);
                out.dropped.push(s.id.clone());
            }
        }
    }
    Ok(out)
}
