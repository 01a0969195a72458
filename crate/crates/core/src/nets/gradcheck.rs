use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::Network;
use super::objective::{objective_value, record_objective, Target};
use crate::diffcore::{finite_difference_check_coords, Tape};
use crate::error::{Error, Result};
use crate::imgops::Image;
use crate::lossmetrics::LossWeights;

/// A central difference with h = 1e-6 on an O(1) objective carries ~1e-10
/// of cancellation error; below this magnitude that is no longer negligible
/// relative to the gradient, so such coordinates are checked absolutely.
const SIGNAL_FLOOR: f64 = 1e-4;

const MAX_DRAWS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Coordinates compared by relative error.
    pub coords: Vec<usize>,
    pub max_relative_error: f64,
    /// Coordinates with negligible analytic gradient.
    pub flat_coords: Vec<usize>,
    pub max_flat_abs_error: f64,
}

/// Analytic gradient of the training objective, flattened in parameter order.
pub fn objective_gradient(
    net: &Network<f64>,
    img: &Image,
    map: Option<&Image>,
    target: Target<'_>,
    w: &LossWeights,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(net.params());
    let out = net.forward(&mut tape, img, map)?;
    let terms = record_objective(net, &mut tape, &out, target, w)?;
    let g = tape.backward(terms.total)?;
    Ok(net.params().flatten_gradients(&g))
}

/// Central-difference check of the full forward chain in double precision.
///
/// The check runs at a random point: biases are redrawn uniformly from
/// ±0.1, since zero biases over dead regions put pre-activations exactly on
/// the ReLU kink. Draws `n` coordinates among those carrying gradient signal
/// and up to `n` among the rest.
pub fn network_gradient_check(
    net: &Network<f64>,
    img: &Image,
    map: Option<&Image>,
    target: Target<'_>,
    w: &LossWeights,
    n: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = net.clone();
    // A draw can leave a tiny network entirely dead (every ReLU off); such a
    // point tests nothing, so redraw a bounded number of times.
    let mut attempt = 0;
    let (analytic, signal, flat) = loop {
        for p in probe.params_mut().iter_mut() {
            if p.name.ends_with(".bias") {
                p.value
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
        }
        let analytic = objective_gradient(&probe, img, map, target, w)?;
        let (signal, flat): (Vec<usize>, Vec<usize>) =
            (0..analytic.len()).partition(|&i| analytic[i].abs() >= SIGNAL_FLOOR);
        if signal.len() >= n {
            break (analytic, signal, flat);
        }
        attempt += 1;
        if attempt == MAX_DRAWS {
            return Err(Error::Numeric(format!(
                "only {} of {} weights carry gradient signal",
                signal.len(),
                analytic.len()
            )));
        }
    };
    let pick = |pool: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
        let k = n.min(pool.len());
        let mut v: Vec<usize> = sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        v.sort_unstable();
        v
    };
    let coords = pick(&signal, &mut rng);
    let flat_coords = pick(&flat, &mut rng);

    let point = probe.params().flat_values();
    let mut eval = |x: &[f64]| {
        probe.params_mut().set_flat_values(x).expect("same layout");
        objective_value(&probe, img, map, target, w).expect("forward succeeded once")
    };
    let h = 1e-6;
    let max_relative_error =
        finite_difference_check_coords(&mut eval, &point, &analytic, h, &coords);
    let mut max_flat_abs_error: f64 = 0.0;
    for &c in &flat_coords {
        let mut x = point.clone();
        x[c] = point[c] + h;
        let fp = eval(&x);
        x[c] = point[c] - h;
        let fm = eval(&x);
        max_flat_abs_error = max_flat_abs_error.max(((fp - fm) / (2.0 * h) - analytic[c]).abs());
    }
    Ok(GradCheckReport {
        coords,
        max_relative_error,
        flat_coords,
        max_flat_abs_error,
    })
}
