//! First-order optimizers over a [`ParamStore`]. State is keyed by parameter name.

use std::collections::HashMap;

use crate::nets::{ParamStore, SlotKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum: `v = mu*v + g + wd*p`, `p -= lr*v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: T,
    pub weight_decay: T,
    velocity: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: T, weight_decay: T) -> Self {
        Sgd { momentum, weight_decay, velocity: HashMap::new() }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &HashMap<String, Tensor<T>>, lr: T) {
        for (name, g) in sorted(grads) {
            if store.slot(name).map(|s| s.kind) != Some(SlotKind::Param) {
                continue;
            }
            let p = store.tensor_mut(name);
            let v = self.velocity.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = self.momentum * *vv + gv + self.weight_decay * *pv;
                *pv -= lr * *vv;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    moments: HashMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: T, beta2: T) -> Self {
        Adam { beta1, beta2, eps: T::lit(1e-8), t: 0, moments: HashMap::new() }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &HashMap<String, Tensor<T>>, lr: T) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for (name, g) in sorted(grads) {
            if store.slot(name).map(|s| s.kind) != Some(SlotKind::Param) {
                continue;
            }
            let p = store.tensor_mut(name);
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            for (((pv, mv), vv), &gv) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
                *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

fn sorted<T>(grads: &HashMap<String, Tensor<T>>) -> Vec<(&String, &Tensor<T>)> {
    let mut v: Vec<_> = grads.iter().collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}
