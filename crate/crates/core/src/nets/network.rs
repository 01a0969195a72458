use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CascadeLevel, NetworkConfig};
use crate::diffcore::{ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::imgops::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    /// LinkNet-style preliminary detector.
    Region,
    /// Multiscale cascaded multitask network.
    Mscmt,
}

/// Architecture plus its trainable parameters.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    kind: NetKind,
    config: NetworkConfig,
    params: ParamStore<T>,
}

/// Tape handles for the outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// `1×H×W` probabilities.
    pub seg: Var,
    /// `[num_classes]` probabilities when the class head is present.
    pub class_probs: Option<Var>,
    /// Pre-softmax scores feeding `class_probs`.
    pub class_logits: Option<Var>,
}

/// Materialized network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub seg_map: Vec<f64>,
    pub class_probs: Option<Vec<f64>>,
}

struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<()> {
        self.store.add_he(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            cin * k * k,
            &mut self.rng,
        )?;
        self.store.add_zeros(format!("{name}.bias"), vec![cout])?;
        Ok(())
    }

    /// 1×1 output conv whose bias starts at a low prior probability, so the
    /// first Dice gradients do not push every pixel towards foreground.
    fn head(&mut self, cin: usize) -> Result<()> {
        self.conv("head", cin, 1, 1)?;
        let id = self.store.id_of("head.bias").expect("just added");
        self.store.get_mut(id).value[0] = T::from_f64(HEAD_BIAS);
        Ok(())
    }

    fn dense(&mut self, name: &str, nin: usize, nout: usize) -> Result<()> {
        self.store.add_he(
            format!("{name}.weight"),
            vec![nout, nin],
            nin,
            &mut self.rng,
        )?;
        self.store.add_zeros(format!("{name}.bias"), vec![nout])?;
        Ok(())
    }
}

/// `sigmoid(-2) ≈ 0.12`.
const HEAD_BIAS: f64 = -2.0;

fn reduced(c: usize) -> usize {
    (c / 4).max(2)
}

/// Builds the preliminary region-detection network.
pub fn build_region_net<T: Real>(cfg: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut b = Builder {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let c = cfg.base_channels;
    b.conv("stem", 1, c[0], 7)?;
    let mut cin = c[0];
    for (i, &ci) in c.iter().enumerate() {
        let n = i + 1;
        b.conv(&format!("enc{n}.conv_a"), cin, ci, 3)?;
        b.conv(&format!("enc{n}.conv_b"), ci, ci, 3)?;
        b.conv(&format!("enc{n}.proj"), cin, ci, 1)?;
        cin = ci;
    }
    build_decoder(&mut b, cfg, false)?;
    b.head(c[0])?;
    Ok(Network {
        kind: NetKind::Region,
        config: cfg.clone(),
        params: store,
    })
}

/// Builds the multiscale cascaded multitask network.
pub fn build_mscmt_net<T: Real>(cfg: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut b = Builder {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let c = cfg.base_channels;
    let in_ch = cfg.input_channels();
    let mut cin = in_ch;
    for (i, &ci) in c.iter().enumerate() {
        let n = i + 1;
        b.conv(&format!("enc{n}.conv_a"), cin, ci, 3)?;
        b.conv(&format!("enc{n}.conv_b"), ci, ci, 3)?;
        b.conv(&format!("enc{n}.proj"), cin, ci, 1)?;
        b.conv(&format!("enc{n}.conv_c"), ci, ci, 3)?;
        b.conv(&format!("enc{n}.conv_d"), ci, ci, 3)?;
        cin = ci + if cfg.multiscale && n < 4 { in_ch } else { 0 };
    }
    let full = cfg.cascade_level == CascadeLevel::Full;
    build_decoder(&mut b, cfg, full)?;
    b.head(c[0] + usize::from(full))?;
    if cfg.multitask {
        b.dense("cls.fc1", cfg.classifier_width(), cfg.fc_hidden)?;
        b.dense("cls.fc2", cfg.fc_hidden, cfg.num_classes)?;
    }
    Ok(Network {
        kind: NetKind::Mscmt,
        config: cfg.clone(),
        params: store,
    })
}

/// Decoder block `n` maps `c[n-1]` (plus an injected map channel) to
/// `c[n-2]` (or `c[0]` for the last block) at twice the resolution.
fn build_decoder<T: Real>(b: &mut Builder<'_, T>, cfg: &NetworkConfig, inject: bool) -> Result<()> {
    let c = cfg.base_channels;
    for n in (1..=4).rev() {
        let cin = c[n - 1] + usize::from(inject && n < 4);
        let cout = if n > 1 { c[n - 2] } else { c[0] };
        let m = reduced(c[n - 1]);
        b.conv(&format!("dec{n}.reduce"), cin, m, 1)?;
        b.conv(&format!("dec{n}.conv"), m, cout, 3)?;
    }
    Ok(())
}

/// Block-mean downscale of a `C×H×W` tensor.
fn downscale_tensor<T: Real>(t: &Tensor<T>, factor: usize) -> Tensor<T> {
    let (c, h, w) = t.chw().expect("feature map");
    let (ho, wo) = (h / factor, w / factor);
    let area = T::from_f64((factor * factor) as f64);
    let mut out = vec![T::zero(); c * ho * wo];
    let x = t.data();
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                out[ch * ho * wo + (y / factor) * wo + xx / factor] += x[ch * h * w + y * w + xx];
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= area);
    Tensor::new(vec![c, ho, wo], out).expect("extents match")
}

fn stack_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (ca, h, w) = a.chw().expect("feature map");
    let cb = b.chw().expect("feature map").0;
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![ca + cb, h, w], data).expect("extents match")
}

impl<T: Real> Network<T> {
    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.numel()
    }

    /// Replaces all weights (and momentum buffers) with `store`, which must
    /// have exactly this network's parameter names and shapes in order.
    pub fn load_params(&mut self, store: ParamStore<T>) -> Result<()> {
        let same = store.len() == self.params.len()
            && store
                .iter()
                .zip(self.params.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !same {
            return Err(Error::InvalidArgument(
                "parameter layout does not match the architecture".into(),
            ));
        }
        self.params = store;
        Ok(())
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            kind: self.kind,
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn check_extent(&self, img: &Image, what: &str) -> Result<()> {
        let s = self.config.input_size;
        if img.dims() != (s, s) {
            return Err(Error::shape(
                "forward",
                format!(
                    "{what} is {}×{} but the network expects {s}×{s}",
                    img.height(),
                    img.width()
                ),
            ));
        }
        Ok(())
    }

    /// Records the forward pass on `tape`. `map` is the preliminary
    /// segmentation; it is required iff the cascade level uses it.
    pub fn forward(
        &self,
        tape: &mut Tape<'_, T>,
        img: &Image,
        map: Option<&Image>,
    ) -> Result<Outputs> {
        self.check_extent(img, "image")?;
        match self.kind {
            NetKind::Region => {
                let x = tape.constant(img.to_tensor());
                let seg = self.region_chain(tape, x)?;
                Ok(Outputs {
                    seg,
                    class_probs: None,
                    class_logits: None,
                })
            }
            NetKind::Mscmt => {
                let mut input: Tensor<T> = img.to_tensor();
                if self.config.uses_map() {
                    let map = map.ok_or_else(|| {
                        Error::InvalidArgument("cascade level requires a preliminary map".into())
                    })?;
                    self.check_extent(map, "preliminary map")?;
                    input = stack_channels(&input, &map.to_tensor());
                }
                let map_t = match (self.config.cascade_level, map) {
                    (CascadeLevel::Full, Some(m)) => Some(m.to_tensor::<T>()),
                    _ => None,
                };
                self.mscmt_chain(tape, input, map_t)
            }
        }
    }

    /// Inference without keeping the tape.
    pub fn predict(&self, img: &Image, map: Option<&Image>) -> Result<PredictionPair> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, img, map)?;
        Ok(PredictionPair {
            seg_map: tape.value(out.seg).iter().map(|v| v.as_f64()).collect(),
            class_probs: out
                .class_probs
                .map(|c| tape.value(c).iter().map(|v| v.as_f64()).collect()),
        })
    }

    fn conv(&self, tape: &mut Tape<'_, T>, name: &str, x: Var, stride: usize) -> Result<Var> {
        let w = self.lookup(tape, &format!("{name}.weight"))?;
        let b = self.lookup(tape, &format!("{name}.bias"))?;
        let k = tape.shape(w)[2];
        tape.conv2d(x, w, Some(b), stride, k / 2)
    }

    fn dense(&self, tape: &mut Tape<'_, T>, name: &str, x: Var) -> Result<Var> {
        let w = self.lookup(tape, &format!("{name}.weight"))?;
        let b = self.lookup(tape, &format!("{name}.bias"))?;
        tape.dense(x, w, b)
    }

    fn lookup(&self, tape: &mut Tape<'_, T>, name: &str) -> Result<Var> {
        let id = self
            .params
            .id_of(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
        Ok(tape.param(id))
    }

    /// Strided conv pair with a projected residual add.
    fn down_stage(&self, tape: &mut Tape<'_, T>, n: usize, x: Var) -> Result<Var> {
        let a = self.conv(tape, &format!("enc{n}.conv_a"), x, 2)?;
        let a = tape.relu(a)?;
        let b = self.conv(tape, &format!("enc{n}.conv_b"), a, 1)?;
        let short = self.conv(tape, &format!("enc{n}.proj"), x, 2)?;
        let s = tape.add(b, short)?;
        tape.relu(s)
    }

    /// Resolution-preserving conv pair with an identity residual add.
    fn same_stage(&self, tape: &mut Tape<'_, T>, n: usize, x: Var) -> Result<Var> {
        let c = self.conv(tape, &format!("enc{n}.conv_c"), x, 1)?;
        let c = tape.relu(c)?;
        let d = self.conv(tape, &format!("enc{n}.conv_d"), c, 1)?;
        let s = tape.add(d, x)?;
        tape.relu(s)
    }

    fn decoder_block(&self, tape: &mut Tape<'_, T>, n: usize, x: Var) -> Result<Var> {
        let r = self.conv(tape, &format!("dec{n}.reduce"), x, 1)?;
        let r = tape.relu(r)?;
        let u = tape.upsample2x(r)?;
        let c = self.conv(tape, &format!("dec{n}.conv"), u, 1)?;
        tape.relu(c)
    }

    fn region_chain(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let s = self.conv(tape, "stem", x, 1)?;
        let mut h = tape.relu(s)?;
        let mut enc = Vec::with_capacity(4);
        for n in 1..=4 {
            h = self.down_stage(tape, n, h)?;
            enc.push(h);
        }
        let mut d = enc[3];
        for n in (1..=4).rev() {
            d = self.decoder_block(tape, n, d)?;
            if n > 1 {
                d = tape.add(d, enc[n - 2])?;
            }
        }
        let logits = self.conv(tape, "head", d, 1)?;
        tape.sigmoid(logits)
    }

    fn mscmt_chain(
        &self,
        tape: &mut Tape<'_, T>,
        input: Tensor<T>,
        map: Option<Tensor<T>>,
    ) -> Result<Outputs> {
        let cfg = &self.config;
        let scaled_inputs: Vec<Tensor<T>> = if cfg.multiscale {
            [2, 4, 8]
                .iter()
                .map(|&f| downscale_tensor(&input, f))
                .collect()
        } else {
            Vec::new()
        };
        let mut h = tape.constant(input);
        let mut enc = Vec::with_capacity(4);
        for n in 1..=4 {
            let a = self.down_stage(tape, n, h)?;
            let out = self.same_stage(tape, n, a)?;
            enc.push(out);
            h = out;
            if cfg.multiscale && n < 4 {
                let inj = tape.constant(scaled_inputs[n - 1].clone());
                h = tape.concat_channels(out, inj)?;
            }
        }

        let mut d = enc[3];
        for n in (1..=4).rev() {
            d = self.decoder_block(tape, n, d)?;
            if n > 1 {
                d = tape.add(d, enc[n - 2])?;
            }
            if let Some(m) = &map {
                // decoder n output sits at input / 2^(n-1)
                let scaled = if n > 1 {
                    downscale_tensor(m, 1 << (n - 1))
                } else {
                    m.clone()
                };
                let mv = tape.constant(scaled);
                d = tape.concat_channels(d, mv)?;
            }
        }
        let logits = self.conv(tape, "head", d, 1)?;
        let seg = tape.sigmoid(logits)?;

        let (class_probs, class_logits) = if cfg.multitask {
            let mut feat = tape.global_maxpool(enc[3])?;
            if cfg.aggregation {
                for &e in &enc {
                    let p = tape.global_maxpool(e)?;
                    feat = concat_flat(tape, feat, p)?;
                }
            }
            let h1 = self.dense(tape, "cls.fc1", feat)?;
            let h1 = tape.relu(h1)?;
            let z = self.dense(tape, "cls.fc2", h1)?;
            (Some(tape.softmax(z)?), Some(z))
        } else {
            (None, None)
        };
        Ok(Outputs {
            seg,
            class_probs,
            class_logits,
        })
    }
}

fn concat_flat<T: Real>(tape: &mut Tape<'_, T>, a: Var, b: Var) -> Result<Var> {
    let (na, nb) = (tape.shape(a)[0], tape.shape(b)[0]);
    let a3 = tape.reshape(a, vec![na, 1, 1])?;
    let b3 = tape.reshape(b, vec![nb, 1, 1])?;
    let c = tape.concat_channels(a3, b3)?;
    tape.reshape(c, vec![na + nb])
}
