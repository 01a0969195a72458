use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the preliminary segmentation map is fed to the main network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeLevel {
    /// The map is ignored.
    None,
    /// The map is stacked with the image as a second input channel.
    Common,
    /// As `Common`, plus the map is concatenated onto every decoder output.
    #[default]
    Full,
}

impl std::str::FromStr for CascadeLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CascadeLevel::None),
            "common" => Ok(CascadeLevel::Common),
            "full" => Ok(CascadeLevel::Full),
            other => Err(Error::Config(format!("unknown cascade level `{other}`"))),
        }
    }
}

impl std::fmt::Display for CascadeLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CascadeLevel::None => "none",
            CascadeLevel::Common => "common",
            CascadeLevel::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub base_channels: [usize; 4],
    pub multiscale: bool,
    pub cascade_level: CascadeLevel,
    pub multitask: bool,
    pub aggregation: bool,
    pub fc_hidden: usize,
    pub num_classes: usize,
}

impl Default for NetworkConfig {
    /// Desk-scale, everything enabled.
    fn default() -> Self {
        NetworkConfig {
            input_size: 64,
            base_channels: [8, 16, 32, 64],
            multiscale: true,
            cascade_level: CascadeLevel::Full,
            multitask: true,
            aggregation: true,
            fc_hidden: 128,
            num_classes: 3,
        }
    }
}

impl NetworkConfig {
    /// Full-scale widths (LinkNet convention) with a 1024-wide classifier.
    pub fn full_scale(input_size: usize) -> Self {
        NetworkConfig {
            input_size,
            base_channels: [64, 128, 256, 512],
            fc_hidden: 1024,
            ..Default::default()
        }
    }

    /// Plain single-task configuration used for the region-detection net.
    pub fn region(input_size: usize, base_channels: [usize; 4]) -> Self {
        NetworkConfig {
            input_size,
            base_channels,
            multiscale: false,
            cascade_level: CascadeLevel::None,
            multitask: false,
            aggregation: false,
            fc_hidden: 0,
            num_classes: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 16 != 0 {
            return Err(Error::Config(format!(
                "input_size {} must be a positive multiple of 16",
                self.input_size
            )));
        }
        if self.base_channels.contains(&0) {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.aggregation && !self.multitask {
            return Err(Error::Config("aggregation requires multitask".into()));
        }
        if self.multitask && (self.fc_hidden == 0 || self.num_classes < 2) {
            return Err(Error::Config(
                "multitask needs fc_hidden > 0 and at least two classes".into(),
            ));
        }
        Ok(())
    }

    /// Channels fed to the first encoder block of the main network.
    pub fn input_channels(&self) -> usize {
        if self.cascade_level >= CascadeLevel::Common {
            2
        } else {
            1
        }
    }

    pub fn uses_map(&self) -> bool {
        self.cascade_level >= CascadeLevel::Common
    }

    /// Width of the vector entering the first classifier layer.
    pub fn classifier_width(&self) -> usize {
        let bottleneck = self.base_channels[3];
        if self.aggregation {
            bottleneck + self.base_channels.iter().sum::<usize>()
        } else {
            bottleneck
        }
    }
}
