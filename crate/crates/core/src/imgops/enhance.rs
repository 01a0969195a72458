use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Image;

/// `k×k` median with replicate padding at the borders.
pub fn median_filter(img: &Image, k: usize) -> Result<Image> {
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "median kernel {k} must be odd"
        )));
    }
    let (h, w) = img.dims();
    if k > h.min(w) {
        return Err(Error::InvalidArgument(format!(
            "median kernel {k} exceeds image {h}×{w}"
        )));
    }
    let r = (k / 2) as isize;
    let mut window = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(h * w);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -r..=r {
                let yy = clamp(y + dy, h);
                for dx in -r..=r {
                    window.push(img.get(yy, clamp(x + dx, w)));
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
            out.push(*m);
        }
    }
    Image::new(h, w, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Multiple of the uniform bin height; `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: 2.0,
            bins: 256,
        }
    }
}

/// Per-tile lookup tables from bin index to output intensity, row-major over
/// the tile grid.
pub fn clahe_tile_mappings(img: &Image, p: &ClaheParams) -> Result<Vec<Vec<f32>>> {
    validate(img, p)?;
    let (h, w) = img.dims();
    let rows = tile_bounds(h, p.tile_rows);
    let cols = tile_bounds(w, p.tile_cols);
    let mut maps = Vec::with_capacity(p.tile_rows * p.tile_cols);
    for ty in 0..p.tile_rows {
        for tx in 0..p.tile_cols {
            let mut hist = vec![0.0f64; p.bins];
            for y in rows[ty]..rows[ty + 1] {
                for x in cols[tx]..cols[tx + 1] {
                    hist[bin_of(img.get(y, x), p.bins)] += 1.0;
                }
            }
            let n = ((rows[ty + 1] - rows[ty]) * (cols[tx + 1] - cols[tx])) as f64;
            if p.clip_limit.is_finite() {
                let limit = p.clip_limit * n / p.bins as f64;
                let mut excess = 0.0;
                for v in hist.iter_mut() {
                    if *v > limit {
                        excess += *v - limit;
                        *v = limit;
                    }
                }
                let share = excess / p.bins as f64;
                hist.iter_mut().for_each(|v| *v += share);
            }
            let mut acc = 0.0;
            let map = hist
                .iter()
                .map(|&v| {
                    acc += v;
                    ((acc / n) as f32).clamp(0.0, 1.0)
                })
                .collect();
            maps.push(map);
        }
    }
    Ok(maps)
}

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// of the four nearest tile mappings.
pub fn clahe(img: &Image, p: &ClaheParams) -> Result<Image> {
    let maps = clahe_tile_mappings(img, p)?;
    let (h, w) = img.dims();
    let ry = interp_axis(&tile_bounds(h, p.tile_rows), h);
    let rx = interp_axis(&tile_bounds(w, p.tile_cols), w);
    let mut out = Vec::with_capacity(h * w);
    for (y, &(y0, y1, wy)) in ry.iter().enumerate() {
        for (x, &(x0, x1, wx)) in rx.iter().enumerate() {
            let b = bin_of(img.get(y, x), p.bins);
            let m = |ty: usize, tx: usize| maps[ty * p.tile_cols + tx][b];
            let top = m(y0, x0) * (1.0 - wx) + m(y0, x1) * wx;
            let bottom = m(y1, x0) * (1.0 - wx) + m(y1, x1) * wx;
            out.push((top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0));
        }
    }
    Image::new(h, w, out)
}

fn validate(img: &Image, p: &ClaheParams) -> Result<()> {
    let (h, w) = img.dims();
    if p.tile_rows == 0 || p.tile_cols == 0 || p.tile_rows > h || p.tile_cols > w {
        return Err(Error::InvalidArgument(format!(
            "tile grid {}×{} invalid for {h}×{w}",
            p.tile_rows, p.tile_cols
        )));
    }
    if !(p.clip_limit >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "clip limit {} must be ≥ 1",
            p.clip_limit
        )));
    }
    if p.bins < 2 {
        return Err(Error::InvalidArgument("need at least 2 bins".into()));
    }
    Ok(())
}

fn bin_of(v: f32, bins: usize) -> usize {
    ((v as f64 * bins as f64) as usize).min(bins - 1)
}

fn tile_bounds(extent: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|i| i * extent / tiles).collect()
}

/// For each coordinate: the two tile indices to blend and the weight of the second.
fn interp_axis(bounds: &[usize], extent: usize) -> Vec<(usize, usize, f32)> {
    let tiles = bounds.len() - 1;
    let centers: Vec<f64> = (0..tiles)
        .map(|i| (bounds[i] + bounds[i + 1] - 1) as f64 / 2.0)
        .collect();
    (0..extent)
        .map(|p| {
            let p = p as f64;
            if p <= centers[0] {
                return (0, 0, 0.0);
            }
            if p >= centers[tiles - 1] {
                return (tiles - 1, tiles - 1, 0.0);
            }
            let i = centers
                .iter()
                .rposition(|&c| c <= p)
                .expect("p above first center");
            let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
            (i, i + 1, t as f32)
        })
        .collect()
}

/// Block-average pooling by a power-of-two `factor`.
pub fn downscale(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} is not a power of two"
        )));
    }
    let (h, w) = img.dims();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} does not divide {h}×{w}"
        )));
    }
    let (ho, wo) = (h / factor, w / factor);
    let area = (factor * factor) as f64;
    let mut out = Vec::with_capacity(ho * wo);
    for by in 0..ho {
        for bx in 0..wo {
            let mut s = 0.0f64;
            for y in by * factor..(by + 1) * factor {
                for x in bx * factor..(bx + 1) * factor {
                    s += img.get(y, x) as f64;
                }
            }
            out.push((s / area) as f32);
        }
    }
    Image::from_clamped(ho, wo, out)
}
