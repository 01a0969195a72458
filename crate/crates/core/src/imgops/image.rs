use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use crate::diffcore::{Real, Tensor};
use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::shape(
                "image",
                format!(
                    "{height}×{width} needs {} pixels, got {}",
                    height * width,
                    pixels.len()
                ),
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    /// Clamps values into `[0, 1]` instead of rejecting them.
    pub fn from_clamped(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Image::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Image {
            height,
            width,
            pixels: vec![value.clamp(0.0, 1.0); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.pixels[r * self.width + c]
    }

    /// `1×H×W` tensor view for the networks.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, self.height, self.width],
            self.pixels.iter().map(|&v| T::from_f64(v as f64)).collect(),
        )
        .expect("image extents are positive")
    }

    /// Binarizes at `threshold` (strictly greater is foreground).
    pub fn threshold(&self, threshold: f32) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.pixels.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(
            height,
            width,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// Reads an 8-bit grayscale PNG or PGM.
    pub fn load(path: &Path) -> Result<Self> {
        let gray = read_gray(path)?;
        let (w, h) = gray.dimensions();
        Image::from_u8(h as usize, w as usize, gray.as_raw())
    }

    /// Writes PNG or PGM depending on the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_gray(path, self.height, self.width, self.to_u8())
    }
}

/// Strictly binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(Error::shape(
                "mask",
                format!(
                    "{height}×{width} needs {} cells, got {}",
                    height * width,
                    bits.len()
                ),
            ));
        }
        Ok(Mask {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    /// Builds a mask from `(row, col)` foreground coordinates.
    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Self {
        let mut m = Mask::empty(height, width);
        for &(r, c) in points {
            m.set(r, c, true);
        }
        m
    }

    /// Parses rows of `#`/`1` (foreground) and `.`/`0` (background).
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(height * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::shape("mask", "ragged ascii rows"));
            }
            bits.extend(row.chars().map(|ch| ch == '#' || ch == '1'));
        }
        Mask::new(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// `1.0` for foreground, `0.0` for background.
    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            pixels: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        self.to_image().to_tensor()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Reads an 8-bit PNG/PGM; any non-zero byte is foreground, but bytes
    /// other than 0 and 255 are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let gray = read_gray(path)?;
        let (w, h) = gray.dimensions();
        if let Some(b) = gray.as_raw().iter().find(|&&b| b != 0 && b != 255) {
            return Err(Error::Image {
                path: path.to_path_buf(),
                detail: format!("mask byte {b} is not 0 or 255"),
            });
        }
        Mask::new(
            h as usize,
            w as usize,
            gray.as_raw().iter().map(|&b| b == 255).collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_gray(
            path,
            self.height,
            self.width,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
    }
}

/// Half-open pixel rectangle `[row_lo, row_hi) × [col_lo, col_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.row_hi - self.row_lo
    }

    pub fn width(&self) -> usize {
        self.col_hi - self.col_lo
    }
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    match img {
        image::DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(Error::Image {
            path: path.to_path_buf(),
            detail: format!("expected 8-bit grayscale, got {:?}", other.color()),
        }),
    }
}

fn write_gray(path: &Path, height: usize, width: usize, bytes: Vec<u8>) -> Result<()> {
    let img: GrayImage =
        image::ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, bytes)
            .expect("buffer sized from extents");
    let format = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
    {
        Some(ext) if ext == "pgm" => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    if format == ImageFormat::Pnm {
        // binary P5 with maxval 255
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(img.as_raw());
        return std::fs::write(path, out).map_err(|e| Error::io(path, e));
    }
    img.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })
}
