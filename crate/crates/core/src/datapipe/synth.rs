use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sample::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgops::{Image, Mask};

/// Geometry of the elliptical "brain".
#[derive(Debug, Clone, Copy)]
struct Brain {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Brain {
    /// `< 1` inside.
    fn radial(&self, y: f64, x: f64) -> f64 {
        (((y - self.cy) / self.ry).powi(2) + ((x - self.cx) / self.rx).powi(2)).sqrt()
    }
}

/// Tumour shape in polar form around its centre.
struct Blob {
    cy: f64,
    cx: f64,
    r0: f64,
    /// `(amplitude, frequency, phase)` radial harmonics.
    harmonics: Vec<(f64, f64, f64)>,
}

impl Blob {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let theta = dy.atan2(dx);
        let r = self.r0
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|&(a, k, p)| a * (k * theta + p).sin())
                    .sum::<f64>());
        (dy * dy + dx * dx).sqrt() <= r
    }
}

fn make_blob(label: usize, brain: &Brain, size: f64, rng: &mut ChaCha8Rng) -> Blob {
    match label {
        // large irregular, star-like, anywhere in the inner brain
        0 => {
            let (ang, frac) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..0.35));
            let k = rng.random_range(4..=6) as f64;
            Blob {
                cy: brain.cy + frac * brain.ry * ang.sin(),
                cx: brain.cx + frac * brain.rx * ang.cos(),
                r0: size * rng.random_range(0.085..0.11),
                harmonics: vec![
                    (
                        rng.random_range(0.22..0.32),
                        k,
                        rng.random_range(0.0..2.0 * PI),
                    ),
                    (
                        rng.random_range(0.05..0.1),
                        k + 3.0,
                        rng.random_range(0.0..2.0 * PI),
                    ),
                ],
            }
        }
        // small and round near the centre
        1 => Blob {
            cy: brain.cy + rng.random_range(-3.0..3.0),
            cx: brain.cx + rng.random_range(-3.0..3.0),
            r0: size * rng.random_range(0.035..0.05),
            harmonics: vec![(0.04, 2.0, rng.random_range(0.0..2.0 * PI))],
        },
        // smooth and round against the rim
        _ => {
            let ang = rng.random_range(0.0..2.0 * PI);
            let frac = rng.random_range(0.58..0.66);
            Blob {
                cy: brain.cy + frac * brain.ry * ang.sin(),
                cx: brain.cx + frac * brain.rx * ang.cos(),
                r0: size * rng.random_range(0.065..0.085),
                harmonics: vec![(0.05, 3.0, rng.random_range(0.0..2.0 * PI))],
            }
        }
    }
}

fn phantom(index: usize, seed: u64, size: usize) -> Result<Sample> {
    let label = index % 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let s = size as f64;
    let brain = Brain {
        cy: s / 2.0 + rng.random_range(-2.0..2.0),
        cx: s / 2.0 + rng.random_range(-2.0..2.0),
        ry: s * rng.random_range(0.30..0.33),
        rx: s * rng.random_range(0.25..0.28),
    };
    let blob = make_blob(label, &brain, s, &mut rng);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.015..0.04),
                rng.random_range(0.1..0.35),
                rng.random_range(0.1..0.35),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let base = rng.random_range(0.32..0.40);
    let tumour_level = rng.random_range(0.72..0.86);
    let noise = Normal::new(0.0, 0.035).expect("finite");

    let mut pixels = Vec::with_capacity(size * size);
    let mut bits = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
            let rad = brain.radial(fy, fx);
            let inside = rad < 1.0;
            let in_tumour = inside && rad < 0.96 && blob.contains(fy, fx);
            let mut v = if in_tumour {
                let core = ((fy - blob.cy).powi(2) + (fx - blob.cx).powi(2)).sqrt() / blob.r0;
                // glioma gets a darker necrotic core
                let necrosis = if label == 0 && core < 0.35 { 0.18 } else { 0.0 };
                tumour_level - necrosis
            } else if inside {
                let tex: f64 = waves
                    .iter()
                    .map(|&(a, wy, wx, p)| a * (wy * fy + wx * fx + p).sin())
                    .sum();
                let ventricle = if rad < 0.22 { -0.12 } else { 0.0 };
                base + tex + ventricle
            } else if rad < 1.08 {
                0.62 // skull
            } else {
                0.04
            };
            v += noise.sample(&mut rng);
            if rng.random::<f64>() < 0.002 {
                v = if rng.random::<bool>() { 1.0 } else { 0.0 };
            }
            pixels.push(v.clamp(0.0, 1.0) as f32);
            bits.push(in_tumour);
        }
    }
    let id = format!("synth-{index:05}");
    let mask = Mask::new(size, size, bits)?;
    if mask.is_empty() {
        return Err(Error::data(&id, "generated an empty tumour mask"));
    }
    let image = Image::new(size, size, pixels)?;
    Sample::new(id, image, mask, label, format!("sp{index:05}"))
}

/// Deterministic phantoms with labels cycling 0, 1, 2.
///
/// Class 0 is a large star-shaped blob with a dark core, class 1 a small
/// round blob near the centre, class 2 a smooth blob near the rim. Every
/// mask lies strictly inside the brain ellipse.
pub fn synth_generate(n: usize, seed: u64, size: usize) -> Result<Vec<Sample>> {
    synth_generate_with(n, seed, size, Exec::default())
}

pub fn synth_generate_with(n: usize, seed: u64, size: usize, exec: Exec) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one phantom".into()));
    }
    if size < 32 {
        return Err(Error::InvalidArgument(format!(
            "phantom size {size} below 32"
        )));
    }
    exec.map_indices(n, |i| phantom(i, seed, size))
        .into_iter()
        .collect()
}
