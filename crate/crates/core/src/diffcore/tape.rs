use crate::error::{Error, Result};

use super::param::{Gradients, ParamId, ParamStore};
use super::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
}

#[derive(Debug)]
enum Op<T> {
    Input {
        requires_grad: bool,
    },
    Param(ParamId),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<u32>,
    },
    Upsample2x {
        input: Var,
    },
    Act {
        kind: Activation,
        input: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Reshape {
        input: Var,
    },
    Sum {
        input: Var,
    },
    /// Scalar whose derivative w.r.t. `input` was computed when recorded.
    Loss {
        input: Var,
        local_grad: Vec<T>,
    },
    Combine {
        terms: Vec<(Var, T)>,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
}

/// Records a forward pass as a topologically ordered node list and replays
/// it in reverse for gradients. Parameters are read from a borrowed store, so
/// independent samples can each own a tape over the same weights.
pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || shape.iter().product::<usize>() == value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Input { requires_grad })
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.input(t, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let shape = self.params.get(id).shape.clone();
        self.push(shape, Vec::new(), Op::Param(id))
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(id).value,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("recorded shapes are valid")
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// Gradient of the last backward pass w.r.t. `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn chw(&self, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape(v) {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(Error::shape(op, format!("expected C×H×W, got {s:?}"))),
        }
    }

    /// Cross-correlation with zero padding. `weight` is `O×C×K×K`, `bias` is `[O]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (c, h, w) = self.chw(input, "conv2d")?;
        let (o, wc, k) = match self.shape(weight) {
            &[o, wc, k1, k2] if k1 == k2 => (o, wc, k1),
            s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("weight must be O×C×K×K, got {s:?}"),
                ))
            }
        };
        if wc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels but weight expects {wc}"),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be positive"));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {k} larger than padded {h}×{w}"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias must be [{o}], got {:?}", self.shape(b)),
                ));
            }
        }
        let geom = ConvGeom::new(c, h, w, k, stride, padding);
        let (ho, wo) = (geom.ho, geom.wo);
        let mut out = vec![T::zero(); o * ho * wo];
        {
            let x = self.value(input);
            let wt = self.value(weight);
            let cols_owned;
            let cols: &[T] = if geom.is_pointwise() {
                x
            } else {
                cols_owned = geom.im2col(x);
                &cols_owned
            };
            let ckk = c * k * k;
            let hw = ho * wo;
            T::gemm(
                o,
                ckk,
                hw,
                T::one(),
                wt,
                ckk as isize,
                1,
                cols,
                hw as isize,
                1,
                T::zero(),
                &mut out,
                hw as isize,
                1,
            );
            if let Some(b) = bias {
                let bv = self.value(b);
                for (row, &bo) in out.chunks_mut(hw).zip(bv) {
                    row.iter_mut().for_each(|v| *v += bo);
                }
            }
        }
        Ok(self.push(
            vec![o, ho, wo],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    /// Non-overlapping max pooling; ties go to the first maximum in row-major order.
    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let (c, h, w) = self.chw(input, "maxpool2d")?;
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(Error::shape(
                "maxpool2d",
                format!("window {window} does not divide {h}×{w}"),
            ));
        }
        let (ho, wo) = (h / window, w / window);
        let x = self.value(input);
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * window * w + ox * window;
                    for dy in 0..window {
                        let row = base + (oy * window + dy) * w + ox * window;
                        for idx in row..row + window {
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best as u32);
                }
            }
        }
        Ok(self.push(vec![c, ho, wo], out, Op::MaxPool { input, argmax }))
    }

    /// Max over each whole channel plane, flattened to a `[C]` vector.
    pub fn global_maxpool(&mut self, input: Var) -> Result<Var> {
        let (_, h, w) = self.chw(input, "global_maxpool")?;
        if h != w {
            return Err(Error::shape(
                "global_maxpool",
                format!("needs square planes, got {h}×{w}"),
            ));
        }
        let pooled = self.maxpool2d(input, h)?;
        let c = self.shape(pooled)[0];
        self.reshape(pooled, vec![c])
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.chw(input, "upsample2x")?;
        let x = self.value(input);
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); c * h2 * w2];
        for ch in 0..c {
            for y in 0..h2 {
                let src = &x[ch * h * w + (y / 2) * w..][..w];
                let dst = &mut out[ch * h2 * w2 + y * w2..][..w2];
                for (xo, d) in dst.iter_mut().enumerate() {
                    *d = src[xo / 2];
                }
            }
        }
        Ok(self.push(vec![c, h2, w2], out, Op::Upsample2x { input }))
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let x = self.value(input);
        let out: Vec<T> = match kind {
            Activation::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => {
                if shape.len() != 1 {
                    return Err(Error::shape(
                        "softmax",
                        format!("needs a flat vector, got {shape:?}"),
                    ));
                }
                softmax(x)
            }
        };
        Ok(self.push(shape, out, Op::Act { kind, input }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.activation(Activation::Relu, input)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(Activation::Sigmoid, input)
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        self.activation(Activation::Softmax, input)
    }

    /// Stacks `b`'s channels after `a`'s.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.chw(a, "concat_channels")?;
        let (cb, hb, wb) = self.chw(b, "concat_channels")?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!("spatial extents differ: {ha}×{wa} vs {hb}×{wb}"),
            ));
        }
        let mut out = Vec::with_capacity((ca + cb) * ha * wa);
        out.extend_from_slice(self.value(a));
        out.extend_from_slice(self.value(b));
        Ok(self.push(vec![ca + cb, ha, wa], out, Op::Concat { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add { a, b }))
    }

    /// `y = W x + b` with `W` of shape `m×n`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let n = match self.shape(input) {
            &[n] => n,
            s => {
                return Err(Error::shape(
                    "dense",
                    format!("input must be flat, got {s:?}"),
                ))
            }
        };
        let (m, wn) = match self.shape(weight) {
            &[m, wn] => (m, wn),
            s => {
                return Err(Error::shape(
                    "dense",
                    format!("weight must be m×n, got {s:?}"),
                ))
            }
        };
        if wn != n {
            return Err(Error::shape(
                "dense",
                format!("weight expects {wn} inputs, got {n}"),
            ));
        }
        if self.shape(bias) != [m] {
            return Err(Error::shape(
                "dense",
                format!("bias must be [{m}], got {:?}", self.shape(bias)),
            ));
        }
        let mut out = self.value(bias).to_vec();
        T::gemm(
            m,
            n,
            1,
            T::one(),
            self.value(weight),
            n as isize,
            1,
            self.value(input),
            1,
            1,
            T::one(),
            &mut out,
            1,
            1,
        );
        Ok(self.push(
            vec![m],
            out,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(input).len() {
            return Err(Error::shape(
                "reshape",
                format!(
                    "{:?} -> {shape:?} changes the element count",
                    self.shape(input)
                ),
            ));
        }
        let out = self.value(input).to_vec();
        Ok(self.push(shape, out, Op::Reshape { input }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).iter().copied().sum();
        self.push(vec![1], vec![total], Op::Sum { input })
    }

    /// Records a scalar objective `value` of `input` whose gradient
    /// `d value / d input` has already been computed by the caller.
    pub fn loss(&mut self, input: Var, value: T, local_grad: Vec<T>) -> Result<Var> {
        if local_grad.len() != self.value(input).len() {
            return Err(Error::shape(
                "loss",
                format!(
                    "gradient length {} vs input length {}",
                    local_grad.len(),
                    self.value(input).len()
                ),
            ));
        }
        Ok(self.push(vec![1], vec![value], Op::Loss { input, local_grad }))
    }

    /// Weighted sum of scalars.
    pub fn combine(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = T::zero();
        for &(v, c) in terms {
            if self.value(v).len() != 1 {
                return Err(Error::shape("combine", "terms must be scalars"));
            }
            total += c * self.value(v)[0];
        }
        Ok(self.push(
            vec![1],
            vec![total],
            Op::Combine {
                terms: terms.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`. Returns the parameter gradients;
    /// per-node gradients remain queryable through [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Gradients::empty(self.params.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let keep = self.backward_node(i, &g, &mut grads, &mut out);
            if keep {
                grads[i] = Some(g);
            }
        }
        self.grads = grads;
        Ok(out)
    }

    /// Propagates `g` (gradient of node `i`) into its inputs. Returns whether
    /// the node's own gradient should be retained for inspection.
    fn backward_node(
        &self,
        i: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        out: &mut Gradients<T>,
    ) -> bool {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input { requires_grad } => return *requires_grad,
            Op::Param(id) => {
                out.accumulate_into(*id, g);
                return true;
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let (c, h, w) = match self.shape(*input) {
                    &[c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let wshape = self.shape(*weight);
                let (o, k) = (wshape[0], wshape[2]);
                let geom = ConvGeom::new(c, h, w, k, *stride, *padding);
                let hw = geom.ho * geom.wo;
                let ckk = c * k * k;
                let x = self.value(*input);
                let cols_owned;
                let cols: &[T] = if geom.is_pointwise() {
                    x
                } else {
                    cols_owned = geom.im2col(x);
                    &cols_owned
                };
                // dW (O×CKK) = g (O×HW) · colsᵀ
                let gw = grad_slot(grads, weight.0, o * ckk);
                T::gemm(
                    o,
                    hw,
                    ckk,
                    T::one(),
                    g,
                    hw as isize,
                    1,
                    cols,
                    1,
                    hw as isize,
                    T::one(),
                    gw,
                    ckk as isize,
                    1,
                );
                if let Some(b) = bias {
                    let gb = grad_slot(grads, b.0, o);
                    for (dst, row) in gb.iter_mut().zip(g.chunks(hw)) {
                        *dst += row.iter().copied().sum::<T>();
                    }
                }
                if self.needs_grad(*input) {
                    let wt = self.value(*weight);
                    if geom.is_pointwise() {
                        let gx = grad_slot(grads, input.0, c * h * w);
                        T::gemm(
                            ckk,
                            o,
                            hw,
                            T::one(),
                            wt,
                            1,
                            ckk as isize,
                            g,
                            hw as isize,
                            1,
                            T::one(),
                            gx,
                            hw as isize,
                            1,
                        );
                    } else {
                        let mut gcols = vec![T::zero(); ckk * hw];
                        T::gemm(
                            ckk,
                            o,
                            hw,
                            T::one(),
                            wt,
                            1,
                            ckk as isize,
                            g,
                            hw as isize,
                            1,
                            T::zero(),
                            &mut gcols,
                            hw as isize,
                            1,
                        );
                        let gx = grad_slot(grads, input.0, c * h * w);
                        geom.col2im_add(&gcols, gx);
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                let n = self.value(*input).len();
                let gx = grad_slot(grads, input.0, n);
                for (&idx, &gv) in argmax.iter().zip(g) {
                    gx[idx as usize] += gv;
                }
            }
            Op::Upsample2x { input } => {
                let (c, h, w) = match self.shape(*input) {
                    &[c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let w2 = 2 * w;
                let gx = grad_slot(grads, input.0, c * h * w);
                for ch in 0..c {
                    for y in 0..2 * h {
                        let src = &g[ch * 4 * h * w + y * w2..][..w2];
                        let dst = &mut gx[ch * h * w + (y / 2) * w..][..w];
                        for (xo, &gv) in src.iter().enumerate() {
                            dst[xo / 2] += gv;
                        }
                    }
                }
            }
            Op::Act { kind, input } => {
                let y = &node.value;
                let n = y.len();
                match kind {
                    Activation::Relu => {
                        let x = self.value(*input);
                        let gx = grad_slot(grads, input.0, n);
                        for ((d, &xv), &gv) in gx.iter_mut().zip(x).zip(g) {
                            if xv > T::zero() {
                                *d += gv;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        let gx = grad_slot(grads, input.0, n);
                        for ((d, &yv), &gv) in gx.iter_mut().zip(y).zip(g) {
                            *d += gv * yv * (T::one() - yv);
                        }
                    }
                    Activation::Softmax => {
                        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                        let gx = grad_slot(grads, input.0, n);
                        for ((d, &yv), &gv) in gx.iter_mut().zip(y).zip(g) {
                            *d += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).len();
                let nb = self.value(*b).len();
                add_into(grad_slot(grads, a.0, na), &g[..na]);
                add_into(grad_slot(grads, b.0, nb), &g[na..]);
            }
            Op::Add { a, b } => {
                add_into(grad_slot(grads, a.0, g.len()), g);
                add_into(grad_slot(grads, b.0, g.len()), g);
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let n = self.value(*input).len();
                let m = g.len();
                let x = self.value(*input);
                let gw = grad_slot(grads, weight.0, m * n);
                // outer product g xᵀ
                T::gemm(
                    m,
                    1,
                    n,
                    T::one(),
                    g,
                    1,
                    1,
                    x,
                    1,
                    1,
                    T::one(),
                    gw,
                    n as isize,
                    1,
                );
                add_into(grad_slot(grads, bias.0, m), g);
                if self.needs_grad(*input) {
                    let wt = self.value(*weight);
                    let gx = grad_slot(grads, input.0, n);
                    T::gemm(
                        n,
                        m,
                        1,
                        T::one(),
                        wt,
                        1,
                        n as isize,
                        g,
                        1,
                        1,
                        T::one(),
                        gx,
                        1,
                        1,
                    );
                }
            }
            Op::Reshape { input } => {
                add_into(grad_slot(grads, input.0, g.len()), g);
            }
            Op::Sum { input } => {
                let n = self.value(*input).len();
                let gv = g[0];
                grad_slot(grads, input.0, n)
                    .iter_mut()
                    .for_each(|d| *d += gv);
            }
            Op::Loss { input, local_grad } => {
                let gv = g[0];
                let gx = grad_slot(grads, input.0, local_grad.len());
                for (d, &l) in gx.iter_mut().zip(local_grad) {
                    *d += gv * l;
                }
            }
            Op::Combine { terms } => {
                for &(v, c) in terms {
                    grad_slot(grads, v.0, 1)[0] += c * g[0];
                }
            }
        }
        false
    }

    /// Whether any parameter or grad-requiring input lies upstream of `v`.
    fn needs_grad(&self, v: Var) -> bool {
        !matches!(
            self.nodes[v.0].op,
            Op::Input {
                requires_grad: false
            }
        )
    }
}

fn grad_slot<T: Real>(grads: &mut [Option<Vec<T>>], idx: usize, len: usize) -> &mut [T] {
    grads[idx].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        ConvGeom {
            c,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Rows indexed by `(c, ki, kj)`, columns by output position.
    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let hw = self.ho * self.wo;
        let mut cols = vec![T::zero(); self.c * self.k * self.k * hw];
        let mut row = 0;
        for ch in 0..self.c {
            let plane = &x[ch * self.h * self.w..][..self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let dst = &mut cols[row * hw..][..hw];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * self.w..][..self.w];
                        let dst_row = &mut dst[oy * self.wo..][..self.wo];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    fn col2im_add<T: Real>(&self, cols: &[T], gx: &mut [T]) {
        let hw = self.ho * self.wo;
        let mut row = 0;
        for ch in 0..self.c {
            let plane = &mut gx[ch * self.h * self.w..][..self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let src = &cols[row * hw..][..hw];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[iy as usize * self.w..][..self.w];
                        let src_row = &src[oy * self.wo..][..self.wo];
                        for (ox, &s) in src_row.iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst_row[ix as usize] += s;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}
