use serde::{Deserialize, Serialize};

use super::sample::Sample;
use crate::error::Result;
use crate::imgops::{clahe, median_filter, ClaheParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub median_kernel: usize,
    pub clahe: ClaheParams,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            median_kernel: 5,
            clahe: ClaheParams::default(),
        }
    }
}

/// Median filter then CLAHE; the mask (and any preliminary map) is kept.
pub fn preprocess_sample(s: &Sample, params: &PreprocessParams) -> Result<Sample> {
    let filtered = median_filter(&s.image, params.median_kernel)?;
    let enhanced = clahe(&filtered, &params.clahe)?;
    Ok(Sample {
        image: enhanced,
        ..s.clone()
    })
}
