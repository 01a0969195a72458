use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BoundingBox, Image, Mask};

/// Per-pixel component ids (0 = background, components numbered from 1 in
/// order of first appearance in a raster scan).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl Labeling {
    /// Pixel count of each component, indexed by `id - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// 8-connected component labeling.
pub fn connected_components(mask: &Mask) -> Labeling {
    let (h, w) = mask.dims();
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (y, x) = ((p / w) as isize, (p % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask.bits()[q] && labels[q] == 0 {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Labeling {
        height: h,
        width: w,
        labels,
        count: next as usize,
    }
}

/// Keeps the biggest component; ties go to the lowest id. `None` signals an
/// empty input, which callers must handle.
pub fn largest_component(mask: &Mask) -> Option<Mask> {
    let lab = connected_components(mask);
    let sizes = lab.sizes();
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((i, s));
        }
    }
    let (idx, _) = best?;
    let keep = idx as u32 + 1;
    Some(
        Mask::new(
            lab.height,
            lab.width,
            lab.labels.iter().map(|&l| l == keep).collect(),
        )
        .expect("same extents"),
    )
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of pixel centers as `(row, col)` vertices in counter-clockwise
/// order (monotone chain, collinear points dropped).
pub fn convex_hull(points: &[(usize, usize)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether integer point `p` lies inside or on the hull.
pub fn hull_contains(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Sets every pixel whose center lies inside the convex hull of the
/// foreground.
pub fn convex_hull_fill(mask: &Mask) -> Result<Mask> {
    let pts: Vec<(usize, usize)> = mask.foreground().collect();
    if pts.is_empty() {
        return Err(Error::Empty("convex_hull_fill needs a foreground pixel"));
    }
    let hull = convex_hull(&pts);
    let (r0, r1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| {
        (lo.min(p.0), hi.max(p.0))
    });
    let (c0, c1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| {
        (lo.min(p.1), hi.max(p.1))
    });
    let mut out = mask.clone();
    for r in r0..=r1 {
        for c in c0..=c1 {
            if hull_contains(&hull, (r, c)) {
                out.set(r as usize, c as usize, true);
            }
        }
    }
    Ok(out)
}

/// Mean `(row, col)` of the foreground pixels.
pub fn center_of_gravity(mask: &Mask) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let (mut sr, mut sc) = (0.0f64, 0.0f64);
    for (r, c) in mask.foreground() {
        n += 1;
        sr += r as f64;
        sc += c as f64;
    }
    if n == 0 {
        return Err(Error::Empty("center_of_gravity needs a foreground pixel"));
    }
    Ok((sr / n as f64, sc / n as f64))
}

/// Round-half-up of a center of gravity to a pixel index.
pub fn round_center((r, c): (f64, f64)) -> (usize, usize) {
    (
        (r + 0.5).floor().max(0.0) as usize,
        (c + 0.5).floor().max(0.0) as usize,
    )
}

/// What to do when the crop window leaves the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderMode {
    /// Reject the sample.
    #[default]
    Drop,
    /// Shift the window back inside the image.
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Crop<T> {
    Kept { bbox: BoundingBox, crops: T },
    Dropped,
}

/// The `2h×2h` window `[r−h, r+h) × [c−h, c+h)`, or `None` if it leaves the
/// image in drop mode.
pub fn crop_box(
    dims: (usize, usize),
    center: (usize, usize),
    half_window: usize,
    mode: BorderMode,
) -> Result<Option<BoundingBox>> {
    if half_window == 0 {
        return Err(Error::InvalidArgument("half_window must be ≥ 1".into()));
    }
    let (h, w) = dims;
    let side = 2 * half_window;
    if side > h || side > w {
        return Ok(None);
    }
    let place = |center: usize, extent: usize| -> Option<usize> {
        let lo = center as isize - half_window as isize;
        let hi = center as isize + half_window as isize;
        if lo >= 0 && hi <= extent as isize {
            return Some(lo as usize);
        }
        match mode {
            BorderMode::Drop => None,
            BorderMode::Clamp => Some(lo.clamp(0, (extent - side) as isize) as usize),
        }
    };
    let (Some(r0), Some(c0)) = (place(center.0, h), place(center.1, w)) else {
        return Ok(None);
    };
    Ok(Some(BoundingBox {
        row_lo: r0,
        row_hi: r0 + side,
        col_lo: c0,
        col_hi: c0 + side,
    }))
}

pub fn crop_image(img: &Image, b: &BoundingBox) -> Image {
    let px = (b.row_lo..b.row_hi)
        .flat_map(|r| (b.col_lo..b.col_hi).map(move |c| (r, c)))
        .map(|(r, c)| img.get(r, c))
        .collect();
    Image::new(b.height(), b.width(), px).expect("box inside image")
}

pub fn crop_mask(mask: &Mask, b: &BoundingBox) -> Mask {
    let bits = (b.row_lo..b.row_hi)
        .flat_map(|r| (b.col_lo..b.col_hi).map(move |c| (r, c)))
        .map(|(r, c)| mask.get(r, c))
        .collect();
    Mask::new(b.height(), b.width(), bits).expect("box inside mask")
}

/// Crops an image and its preliminary map with the same window.
pub fn crop_window(
    img: &Image,
    map: &Image,
    center: (usize, usize),
    half_window: usize,
    mode: BorderMode,
) -> Result<Crop<(Image, Image)>> {
    if img.dims() != map.dims() {
        return Err(Error::shape("crop_window", "image and map extents differ"));
    }
    Ok(match crop_box(img.dims(), center, half_window, mode)? {
        Some(bbox) => Crop::Kept {
            bbox,
            crops: (crop_image(img, &bbox), crop_image(map, &bbox)),
        },
        None => Crop::Dropped,
    })
}
