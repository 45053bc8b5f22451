//! Named parameter storage and per-forward binding onto a tape.

use std::collections::HashMap;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autograd::{BatchStats, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    /// Optimized by gradient descent.
    Param,
    /// Running statistics; saved but not optimized.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slot<T> {
    pub kind: SlotKind,
    pub tensor: Tensor<T>,
}

/// How a freshly declared tensor is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Kaiming normal with the given fan (fan-out for convolutions).
    KaimingNormal { fan: usize },
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanInUniform { fan_in: usize },
}

/// Ordered map of every tensor a network owns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    slots: IndexMap<String, Slot<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { slots: IndexMap::new() }
    }

    pub fn declare(&mut self, name: &str, kind: SlotKind, shape: &[usize], init: Init, rng: &mut impl Rng) {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::KaimingNormal { fan } => {
                let std = (2.0 / fan.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| T::lit(normal.sample(rng))).collect()
            }
            Init::FanInUniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let uniform = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                (0..n).map(|_| T::lit(uniform.sample(rng))).collect()
            }
        };
        let tensor = Tensor::from_vec(shape, data).expect("declared shape");
        let previous = self.slots.insert(name.to_string(), Slot { kind, tensor });
        assert!(previous.is_none(), "parameter `{name}` declared twice");
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.slots.get(name).map(|s| &s.tensor)
    }

    pub fn tensor(&self, name: &str) -> &Tensor<T> {
        self.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn slot(&self, name: &str) -> Option<&Slot<T>> {
        self.slots.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Slot<T>)> {
        self.slots.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of scalar parameters, buffers excluded.
    pub fn param_count(&self) -> usize {
        self.slots.values().filter(|s| s.kind == SlotKind::Param).map(|s| s.tensor.numel()).sum()
    }

    /// Replaces a tensor, keeping its kind; the shape must match.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("unknown parameter `{name}`")))?;
        if slot.tensor.shape() != tensor.shape() {
            return Err(Error::ShapeMismatch(format!(
                "`{name}`: expected {:?}, got {:?}",
                slot.tensor.shape(),
                tensor.shape()
            )));
        }
        slot.tensor = tensor;
        Ok(())
    }

    pub(crate) fn tensor_mut(&mut self, name: &str) -> &mut Tensor<T> {
        &mut self.slots.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`")).tensor
    }

    pub fn is_finite(&self) -> bool {
        self.slots.values().all(|s| s.tensor.is_finite())
    }
}

/// Whether normalization layers use batch statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One network's parameters bound onto a tape for a single forward pass.
pub struct Binding<'p, T: Scalar> {
    store: &'p ParamStore<T>,
    mode: Mode,
    trainable: bool,
    bound: HashMap<String, Var>,
    stats: Vec<(String, BatchStats<T>)>,
}

impl<'p, T: Scalar> Binding<'p, T> {
    pub fn new(store: &'p ParamStore<T>, mode: Mode, trainable: bool) -> Self {
        Binding { store, mode, trainable, bound: HashMap::new(), stats: Vec::new() }
    }

    /// Binding for gradient-free evaluation.
    pub fn frozen(store: &'p ParamStore<T>) -> Self {
        Self::new(store, Mode::Eval, false)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, tape: &mut Tape<T>, name: &str) -> Var {
        if let Some(&v) = self.bound.get(name) {
            return v;
        }
        let v = tape.leaf(self.store.tensor(name).clone(), self.trainable);
        self.bound.insert(name.to_string(), v);
        v
    }

    pub(crate) fn record_stats(&mut self, prefix: &str, stats: BatchStats<T>) {
        self.stats.push((prefix.to_string(), stats));
    }

    /// Gradients of every bound parameter, keyed by name.
    pub fn gradients(&self, grads: &Gradients<T>) -> HashMap<String, Tensor<T>> {
        self.bound
            .iter()
            .filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    /// Batch statistics gathered during a training-mode forward pass.
    pub fn into_stats(self) -> Vec<(String, BatchStats<T>)> {
        self.stats
    }
}

/// Folds batch statistics into running means with the given momentum.
pub fn update_running_stats<T: Scalar>(store: &mut ParamStore<T>, stats: &[(String, BatchStats<T>)], momentum: T) {
    let keep = T::one() - momentum;
    for (prefix, s) in stats {
        let mean = store.tensor_mut(&format!("{prefix}.running_mean"));
        for (m, &b) in mean.data_mut().iter_mut().zip(&s.mean) {
            *m = keep * *m + momentum * b;
        }
        let var = store.tensor_mut(&format!("{prefix}.running_var"));
        for (m, &b) in var.data_mut().iter_mut().zip(&s.unbiased_var) {
            *m = keep * *m + momentum * b;
        }
    }
}
