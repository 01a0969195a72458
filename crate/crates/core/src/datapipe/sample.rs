use crate::error::{Error, Result};
use crate::imgops::{Image, Mask};

/// Class names in report order.
pub const CLASS_NAMES: [&str; 3] = ["glioma", "pituitary", "meningioma"];

pub const NUM_CLASSES: usize = CLASS_NAMES.len();

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: Mask,
    /// 0 = glioma, 1 = pituitary, 2 = meningioma.
    pub label: usize,
    pub patient_id: String,
    pub fold: Option<usize>,
    /// Preliminary segmentation from the region detector, present after ROI
    /// extraction.
    pub prelim: Option<Image>,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        image: Image,
        mask: Mask,
        label: usize,
        patient_id: impl Into<String>,
    ) -> Result<Self> {
        let s = Sample {
            id: id.into(),
            image,
            mask,
            label,
            patient_id: patient_id.into(),
            fold: None,
            prelim: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image.dims() != self.mask.dims() {
            return Err(Error::data(
                &self.id,
                format!(
                    "image {:?} vs mask {:?}",
                    self.image.dims(),
                    self.mask.dims()
                ),
            ));
        }
        if let Some(p) = &self.prelim {
            if p.dims() != self.image.dims() {
                return Err(Error::data(
                    &self.id,
                    format!(
                        "image {:?} vs preliminary map {:?}",
                        self.image.dims(),
                        p.dims()
                    ),
                ));
            }
        }
        if self.label >= NUM_CLASSES {
            return Err(Error::data(
                &self.id,
                format!("label {} outside 0..{NUM_CLASSES}", self.label),
            ));
        }
        Ok(())
    }
}
