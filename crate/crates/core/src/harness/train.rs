use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Gradients, Tape};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgops::{Image, Mask};
use crate::lossmetrics::LossWeights;
use crate::nets::{record_objective, Network, Target};

/// One training example in network resolution.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub image: Image,
    /// Preliminary map for cascaded networks.
    pub map: Option<Image>,
    pub mask: Mask,
    pub label: usize,
    /// Boundary weight map for the weighted Dice loss.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip: f64,
    pub loss: LossWeights,
    pub exec: Exec,
}

/// Everything besides the weights that a resumed run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    /// Mean training loss of each completed epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainState {
    /// Fresh state; `stream` separates the region and main stages and folds.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        TrainState {
            epoch: 0,
            rng,
            loss_trace: Vec::new(),
        }
    }
}

fn sample_gradient(
    net: &Network<f32>,
    item: &TrainItem,
    loss: &LossWeights,
) -> Result<(Gradients<f32>, f64)> {
    let mut tape = Tape::new(net.params());
    let out = net.forward(&mut tape, &item.image, item.map.as_ref())?;
    let target = Target {
        mask: &item.mask,
        label: item.label,
        weights: item.weights.as_deref(),
    };
    let terms = record_objective(net, &mut tape, &out, target, loss)?;
    let value = tape.scalar(terms.total) as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {value}")));
    }
    Ok((tape.backward(terms.total)?, value))
}

/// One SGD step on `batch`. Per-sample gradients may be computed in
/// parallel but are summed in batch order, so the update is independent of
/// the worker count.
pub fn train_step(
    net: &mut Network<f32>,
    items: &[TrainItem],
    batch: &[usize],
    h: &Hyper,
) -> Result<f64> {
    let results = h
        .exec
        .map(batch, |&i| sample_gradient(net, &items[i], &h.loss));
    let mut total = Gradients::empty(net.params().len());
    let mut loss = 0.0;
    for r in results {
        let (g, l) = r?;
        total.add_assign(&g);
        loss += l;
    }
    total.scale(1.0 / batch.len() as f32);
    if h.grad_clip > 0.0 {
        let norm = total.norm();
        if norm > h.grad_clip {
            total.scale((h.grad_clip / norm) as f32);
        }
    }
    let store = net.params_mut();
    store.accumulate(&total);
    store.sgd_momentum_step(h.lr as f32, h.momentum as f32);
    Ok(loss)
}

/// Trains until `state.epoch == until_epoch`, reshuffling every epoch from
/// the state's generator. `on_epoch` sees each completed epoch.
pub fn train_epochs(
    net: &mut Network<f32>,
    items: &[TrainItem],
    h: &Hyper,
    state: &mut TrainState,
    until_epoch: usize,
    mut on_epoch: impl FnMut(&Network<f32>, &TrainState) -> Result<()>,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    while state.epoch < until_epoch {
        order.sort_unstable();
        order.shuffle(&mut state.rng);
        let mut sum = 0.0;
        for batch in order.chunks(h.batch_size) {
            sum += train_step(net, items, batch, h)?;
        }
        state.loss_trace.push(sum / items.len() as f64);
        state.epoch += 1;
        log::debug!("epoch {} loss {:.5}", state.epoch, sum / items.len() as f64);
        on_epoch(net, state)?;
    }
    Ok(())
}
