//! Concrete network topologies.

use rand::Rng;

use super::layers::{BasicBlock, ConvBn, Conv2d, ConvTranspose2d, Linear};
use super::params::{Binding, ParamStore};
use crate::autograd::{Tape, Var};
use crate::scalar::Scalar;

/// Reference ResNet-18 stage widths.
pub const RESNET18_WIDTHS: [usize; 4] = [64, 128, 256, 512];
/// Blocks per stage for ResNet-18.
pub const RESNET18_BLOCKS: [usize; 4] = [2, 2, 2, 2];
/// ResNet-8 student: one basic block in each of three stages.
pub const RESNET8_WIDTHS: [usize; 3] = [16, 32, 64];
/// VGG-8 student: two 3x3 convolutions per width, each pair followed by 2x2 max pooling.
pub const VGG8_WIDTHS: [usize; 3] = [16, 32, 64];
pub const VGG8_HIDDEN: usize = 128;
/// MobileNet-small: stem width, then (output width, stride) per depthwise-separable block.
pub const MOBILENET_STEM: usize = 16;
pub const MOBILENET_BLOCKS: [(usize, usize); 5] = [(32, 1), (64, 2), (64, 1), (128, 2), (128, 1)];
/// Fusion adapter width at full ResNet-18 width.
pub const ADAPTER_WIDTH: usize = 256;
/// Transposed-convolution widths of the drawing decoder.
pub const DECODER_WIDTHS: [usize; 2] = [32, 16];
pub const RECOVERY_WIDTH: usize = 16;
pub const DISCRIMINATOR_WIDTHS: [usize; 2] = [16, 32];
pub const LEAKY_SLOPE: f64 = 0.2;

/// Inputs at or below this side length use the compact stem.
pub const COMPACT_STEM_MAX_RESOLUTION: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stem {
    /// 7x7 stride-2 convolution followed by 3x3 stride-2 max pooling.
    Standard,
    /// 3x3 stride-1 convolution followed by 3x3 stride-2 max pooling.
    Compact,
    /// 3x3 stride-2 convolution, no pooling.
    Strided,
}

#[derive(Clone, Debug)]
pub struct ResNetTrunk {
    pub stem_kind: Stem,
    pub stem: ConvBn,
    pub stages: Vec<Vec<BasicBlock>>,
    pub widths: Vec<usize>,
}

impl ResNetTrunk {
    pub fn new(stem_kind: Stem, widths: &[usize], blocks: &[usize]) -> Self {
        let stem = match stem_kind {
            Stem::Standard => ConvBn::new("trunk.stem", 3, widths[0], 7, 2, 3),
            Stem::Compact => ConvBn::new("trunk.stem", 3, widths[0], 3, 1, 1),
            Stem::Strided => ConvBn::new("trunk.stem", 3, widths[0], 3, 2, 1),
        };
        let mut stages = Vec::with_capacity(widths.len());
        let mut in_ch = widths[0];
        for (s, (&w, &n)) in widths.iter().zip(blocks).enumerate() {
            let stride = if s == 0 { 1 } else { 2 };
            let stage = (0..n)
                .map(|b| {
                    let block = BasicBlock::new(
                        &format!("trunk.layer{}.{b}", s + 1),
                        if b == 0 { in_ch } else { w },
                        w,
                        if b == 0 { stride } else { 1 },
                    );
                    block
                })
                .collect();
            stages.push(stage);
            in_ch = w;
        }
        ResNetTrunk { stem_kind, stem, stages, widths: widths.to_vec() }
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        self.stem.declare(store, rng);
        for block in self.stages.iter().flatten() {
            block.declare(store, rng);
        }
    }

    /// Returns the output of every stage, `layer1` first.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Vec<Var> {
        let mut y = self.stem.forward(tape, bind, x, true);
        if self.stem_kind != Stem::Strided {
            y = tape.max_pool(y, 3, 2, 1);
        }
        let mut outs = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            for block in stage {
                y = block.forward(tape, bind, y);
            }
            outs.push(y);
        }
        outs
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().expect("nonempty trunk")
    }
}

#[derive(Clone, Debug)]
pub struct ResNet {
    pub trunk: ResNetTrunk,
    pub fc: Linear,
}

impl ResNet {
    pub fn new(trunk: ResNetTrunk, num_classes: usize) -> Self {
        let fc = Linear::new("fc", trunk.out_width(), num_classes);
        ResNet { trunk, fc }
    }
}

#[derive(Clone, Debug)]
pub struct Vgg {
    pub convs: Vec<ConvBn>,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Vgg {
    pub fn new(resolution: usize, num_classes: usize) -> Self {
        let mut convs = Vec::new();
        let mut in_ch = 3;
        for (i, &w) in VGG8_WIDTHS.iter().enumerate() {
            convs.push(ConvBn::new(&format!("features.{}", 2 * i), in_ch, w, 3, 1, 1));
            convs.push(ConvBn::new(&format!("features.{}", 2 * i + 1), w, w, 3, 1, 1));
            in_ch = w;
        }
        let side = resolution >> VGG8_WIDTHS.len();
        let flat = in_ch * side * side;
        Vgg { convs, fc1: Linear::new("fc1", flat, VGG8_HIDDEN), fc2: Linear::new("fc2", VGG8_HIDDEN, num_classes) }
    }
}

#[derive(Clone, Debug)]
pub struct MobileNet {
    pub stem: ConvBn,
    /// (depthwise, pointwise) pairs.
    pub blocks: Vec<(ConvBn, ConvBn)>,
    pub fc: Linear,
}

impl MobileNet {
    pub fn new(num_classes: usize) -> Self {
        let stem = ConvBn::new("stem", 3, MOBILENET_STEM, 3, 2, 1);
        let mut in_ch = MOBILENET_STEM;
        let blocks = MOBILENET_BLOCKS
            .iter()
            .enumerate()
            .map(|(i, &(out, stride))| {
                let dw = ConvBn::new(&format!("blocks.{i}.dw"), in_ch, in_ch, 3, stride, 1).grouped(in_ch);
                let pw = ConvBn::new(&format!("blocks.{i}.pw"), in_ch, out, 1, 1, 0);
                in_ch = out;
                (dw, pw)
            })
            .collect();
        MobileNet { stem, blocks, fc: Linear::new("fc", in_ch, num_classes) }
    }
}

/// ResNet-18 trunk with a compact stem and multi-scale fusion of stages 2-4
/// onto the stage-2 grid, followed by a 1x1 channel adapter.
#[derive(Clone, Debug)]
pub struct DrawEncoder {
    pub trunk: ResNetTrunk,
    pub adapter: ConvBn,
}

impl DrawEncoder {
    pub fn new(widths: &[usize], adapter_width: usize) -> Self {
        let trunk = ResNetTrunk::new(Stem::Compact, widths, &RESNET18_BLOCKS);
        let fused = widths[1] + widths[2] + widths[3];
        DrawEncoder { trunk, adapter: ConvBn::new("adapter", fused, adapter_width, 1, 1, 0) }
    }

    pub fn adapter_width(&self) -> usize {
        self.adapter.conv.out_ch
    }
}

/// Two stride-2 transposed convolutions and a 7x7 convolution with sigmoid output.
#[derive(Clone, Debug)]
pub struct DrawDecoder {
    pub up1: ConvTranspose2d,
    pub up2: ConvTranspose2d,
    pub out: Conv2d,
}

impl DrawDecoder {
    pub fn new(in_ch: usize) -> Self {
        let [w1, w2] = DECODER_WIDTHS;
        let up = |name: &str, i, o| ConvTranspose2d {
            name: name.to_string(),
            in_ch: i,
            out_ch: o,
            kernel: 3,
            stride: 2,
            pad: 1,
            output_pad: 1,
        };
        DrawDecoder {
            up1: up("decoder.up1", in_ch, w1),
            up2: up("decoder.up2", w1, w2),
            out: Conv2d::new("decoder.out", w2, 1, 7, 1, 3).with_bias(),
        }
    }
}

/// Maps a one-channel drawing back to a one-channel grayscale photo estimate.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub convs: [Conv2d; 3],
}

impl Recovery {
    pub fn new() -> Self {
        Recovery {
            convs: [
                Conv2d::new("recovery.0", 1, RECOVERY_WIDTH, 3, 1, 1).with_bias(),
                Conv2d::new("recovery.1", RECOVERY_WIDTH, RECOVERY_WIDTH, 3, 1, 1).with_bias(),
                Conv2d::new("recovery.2", RECOVERY_WIDTH, 1, 3, 1, 1).with_bias(),
            ],
        }
    }
}

impl Default for Recovery {
    fn default() -> Self {
        Self::new()
    }
}

/// Patch discriminator producing one score per receptive-field patch.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    pub convs: [Conv2d; 3],
}

impl PatchDiscriminator {
    pub fn new() -> Self {
        let [w1, w2] = DISCRIMINATOR_WIDTHS;
        PatchDiscriminator {
            convs: [
                Conv2d::new("disc.0", 1, w1, 4, 2, 1).with_bias(),
                Conv2d::new("disc.1", w1, w2, 4, 2, 1).with_bias(),
                Conv2d::new("disc.2", w2, 1, 3, 1, 1).with_bias(),
            ],
        }
    }
}

impl Default for PatchDiscriminator {
    fn default() -> Self {
        Self::new()
    }
}
