//! Layer building blocks. Each layer knows its parameter names, declares
//! them into a [`ParamStore`] and runs its forward pass on a tape.

use rand::Rng;

use super::params::{Binding, Init, Mode, ParamStore, SlotKind};
use crate::autograd::{Tape, Var};
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub bias: bool,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Conv2d { name: name.into(), in_ch, out_ch, kernel, stride, pad, groups: 1, bias: false }
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn grouped(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let fan_out = self.out_ch / self.groups * self.kernel * self.kernel;
        store.declare(
            &format!("{}.weight", self.name),
            SlotKind::Param,
            &[self.out_ch, self.in_ch / self.groups, self.kernel, self.kernel],
            Init::KaimingNormal { fan: fan_out },
            rng,
        );
        if self.bias {
            store.declare(&format!("{}.bias", self.name), SlotKind::Param, &[self.out_ch], Init::Zeros, rng);
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Var {
        let w = bind.param(tape, &format!("{}.weight", self.name));
        let b = self.bias.then(|| bind.param(tape, &format!("{}.bias", self.name)));
        tape.conv2d(x, w, b, self.stride, self.pad, self.groups)
    }
}

/// Transposed convolution with bias; weight layout `[in, out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}

impl ConvTranspose2d {
    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let fan_in = self.in_ch * self.kernel * self.kernel;
        store.declare(
            &format!("{}.weight", self.name),
            SlotKind::Param,
            &[self.in_ch, self.out_ch, self.kernel, self.kernel],
            Init::FanInUniform { fan_in },
            rng,
        );
        store.declare(&format!("{}.bias", self.name), SlotKind::Param, &[self.out_ch], Init::Zeros, rng);
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Var {
        let w = bind.param(tape, &format!("{}.weight", self.name));
        let b = bind.param(tape, &format!("{}.bias", self.name));
        tape.conv_transpose2d(x, w, Some(b), self.stride, self.pad, self.output_pad)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm2d { name: name.into(), channels }
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let c = [self.channels];
        store.declare(&format!("{}.weight", self.name), SlotKind::Param, &c, Init::Ones, rng);
        store.declare(&format!("{}.bias", self.name), SlotKind::Param, &c, Init::Zeros, rng);
        store.declare(&format!("{}.running_mean", self.name), SlotKind::Buffer, &c, Init::Zeros, rng);
        store.declare(&format!("{}.running_var", self.name), SlotKind::Buffer, &c, Init::Ones, rng);
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Var {
        let gamma = bind.param(tape, &format!("{}.weight", self.name));
        let beta = bind.param(tape, &format!("{}.bias", self.name));
        let eps = T::lit(BN_EPS);
        match bind.mode() {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, gamma, beta, eps);
                bind.record_stats(&self.name, stats);
                y
            }
            Mode::Eval => {
                let store = bind.store();
                let mean = store.tensor(&format!("{}.running_mean", self.name)).data().to_vec();
                let var = store.tensor(&format!("{}.running_var", self.name)).data().to_vec();
                tape.batch_norm_eval(x, gamma, beta, &mean, &var, eps)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        Linear { name: name.into(), in_features, out_features }
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let init = Init::FanInUniform { fan_in: self.in_features };
        store.declare(
            &format!("{}.weight", self.name),
            SlotKind::Param,
            &[self.out_features, self.in_features],
            init,
            rng,
        );
        store.declare(&format!("{}.bias", self.name), SlotKind::Param, &[self.out_features], init, rng);
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Var {
        let w = bind.param(tape, &format!("{}.weight", self.name));
        let b = bind.param(tape, &format!("{}.bias", self.name));
        tape.linear(x, w, b)
    }
}

/// Convolution followed by batch norm and an optional ReLU.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBn {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        ConvBn {
            conv: Conv2d::new(format!("{name}.conv"), in_ch, out_ch, kernel, stride, pad),
            bn: BatchNorm2d::new(format!("{name}.bn"), out_ch),
        }
    }

    pub fn grouped(mut self, groups: usize) -> Self {
        self.conv.groups = groups;
        self
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        self.conv.declare(store, rng);
        self.bn.declare(store, rng);
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var, relu: bool) -> Var {
        let y = self.conv.forward(tape, bind, x);
        let y = self.bn.forward(tape, bind, y);
        if relu {
            tape.relu(y)
        } else {
            y
        }
    }
}

/// ResNet basic block: two 3x3 conv-bn pairs with an identity or 1x1 projection shortcut.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub first: ConvBn,
    pub second: ConvBn,
    pub shortcut: Option<ConvBn>,
}

impl BasicBlock {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        let shortcut =
            (stride != 1 || in_ch != out_ch).then(|| ConvBn::new(&format!("{name}.downsample"), in_ch, out_ch, 1, stride, 0));
        BasicBlock {
            first: ConvBn::new(&format!("{name}.a"), in_ch, out_ch, 3, stride, 1),
            second: ConvBn::new(&format!("{name}.b"), out_ch, out_ch, 3, 1, 1),
            shortcut,
        }
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        self.first.declare(store, rng);
        self.second.declare(store, rng);
        if let Some(s) = &self.shortcut {
            s.declare(store, rng);
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Var {
        let y = self.first.forward(tape, bind, x, true);
        let y = self.second.forward(tape, bind, y, false);
        let skip = match &self.shortcut {
            Some(s) => s.forward(tape, bind, x, false),
            None => x,
        };
        let sum = tape.add(y, skip);
        tape.relu(sum)
    }
}
