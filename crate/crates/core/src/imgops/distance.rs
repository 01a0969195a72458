use crate::error::{Error, Result};

use super::Mask;

/// Euclidean distance from every pixel to the nearest boundary pixel of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }
}

/// Foreground pixels with at least one background 4-neighbour. Pixels on the
/// image edge count as boundary (outside is background).
pub fn boundary_pixels(mask: &Mask) -> Mask {
    let (h, w) = mask.dims();
    let mut out = Mask::empty(h, w);
    for (r, c) in mask.foreground() {
        let edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
        let touches = edge
            || !mask.get(r - 1, c)
            || !mask.get(r + 1, c)
            || !mask.get(r, c - 1)
            || !mask.get(r, c + 1);
        if touches {
            out.set(r, c, true);
        }
    }
    out
}

/// Exact Euclidean distance transform to the boundary of `gt` (separable
/// lower-envelope algorithm on squared distances).
pub fn boundary_distance_map(gt: &Mask) -> Result<DistanceField> {
    if gt.is_empty() {
        return Err(Error::Empty(
            "boundary_distance_map needs a foreground pixel",
        ));
    }
    let (h, w) = gt.dims();
    let boundary = boundary_pixels(gt);
    let inf = 1e20;
    let mut grid: Vec<f64> = boundary
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { inf })
        .collect();

    let mut f = vec![0.0; h.max(w)];
    let mut d = vec![0.0; h.max(w)];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        lower_envelope(&f[..h], &mut d[..h]);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        lower_envelope(&f[..w], &mut d[..w]);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
    Ok(DistanceField {
        height: h,
        width: w,
        values: grid.into_iter().map(f64::sqrt).collect(),
    })
}

/// 1-D squared distance transform `d(p) = min_q (p − q)² + f(q)`.
fn lower_envelope(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: replace the only parabola
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}
