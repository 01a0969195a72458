use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable array with its accumulated gradient and SGD momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub momentum: Vec<T>,
}

impl<T: Real> Parameter<T> {
    fn new(name: String, shape: Vec<usize>, value: Vec<T>) -> Self {
        let n = value.len();
        Parameter {
            name,
            shape,
            value,
            grad: vec![T::zero(); n],
            momentum: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: Vec<T>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != value.len() || numel == 0 {
            return Err(Error::shape(
                "parameter",
                format!("`{name}`: shape {shape:?} vs {} values", value.len()),
            ));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id.0);
        self.params.push(Parameter::new(name, shape, value));
        Ok(id)
    }

    /// Zero-mean normal initialization with variance `2 / fan_in`.
    pub fn add_he<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let numel: usize = shape.iter().product();
        let values = (0..numel)
            .map(|_| T::from_f64(normal.sample(rng)))
            .collect();
        self.add(name, shape, values)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<ParamId> {
        let numel: usize = shape.iter().product();
        self.add(name, shape, vec![T::zero(); numel])
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id_of(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds a gradient set (e.g. one sample's backward result) into `grad`.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (p, g) in self.params.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                for (dst, &src) in p.grad.iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
    }

    /// `buffer ← momentum·buffer + grad; value ← value − lr·buffer`, then zero grads.
    pub fn sgd_momentum_step(&mut self, lr: T, momentum: T) {
        for p in &mut self.params {
            for ((v, m), g) in p
                .value
                .iter_mut()
                .zip(p.momentum.iter_mut())
                .zip(p.grad.iter_mut())
            {
                *m = momentum * *m + *g;
                *v -= lr * *m;
                *g = T::zero();
            }
        }
    }

    /// L2 norm over the gradients of parameters whose name starts with `prefix`.
    pub fn grad_norm(&self, prefix: &str) -> f64 {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .flat_map(|p| p.grad.iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// All values concatenated in insertion order.
    pub fn flat_values(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    /// Inverse of [`ParamStore::flat_values`].
    pub fn set_flat_values(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::shape(
                "set_flat_values",
                format!("{} values for {} weights", flat.len(), self.numel()),
            ));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Flattens a [`Gradients`] set in the same order, zero-filling gaps.
    pub fn flatten_gradients(&self, grads: &Gradients<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.numel());
        for (p, g) in self.params.iter().zip(&grads.per_param) {
            match g {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(T::zero(), p.value.len())),
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let params = self
            .params
            .iter()
            .map(|p| Parameter {
                name: p.name.clone(),
                shape: p.shape.clone(),
                value: p.value.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                grad: p.grad.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                momentum: p.momentum.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            })
            .collect();
        ParamStore {
            params,
            by_name: self.by_name.clone(),
        }
    }
}

/// Per-parameter gradients produced by one backward pass. Parameters the loss
/// does not reach stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub(crate) per_param: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn empty(n_params: usize) -> Self {
        Gradients {
            per_param: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn accumulate_into(&mut self, id: ParamId, grad: &[T]) {
        let slot = &mut self.per_param[id.0];
        match slot {
            Some(dst) => dst.iter_mut().zip(grad).for_each(|(d, &s)| *d += s),
            None => *slot = Some(grad.to_vec()),
        }
    }

    /// Elementwise sum, used for fixed-order batch reduction.
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (dst, src) in self.per_param.iter_mut().zip(&other.per_param) {
            if let Some(src) = src {
                match dst {
                    Some(d) => d.iter_mut().zip(src).for_each(|(a, &b)| *a += b),
                    None => *dst = Some(src.clone()),
                }
            }
        }
    }

    /// Global L2 norm over every reached parameter.
    pub fn norm(&self) -> f64 {
        self.per_param
            .iter()
            .flatten()
            .flatten()
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.per_param.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
}
