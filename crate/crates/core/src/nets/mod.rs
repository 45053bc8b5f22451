//! Classifier, student and learning-to-draw networks plus checkpoint archives.

pub mod arch;
pub mod checkpoint;
pub mod layers;
pub mod params;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::corpus::ImageBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use arch::{
    DrawDecoder, DrawEncoder, MobileNet, PatchDiscriminator, Recovery, ResNet, ResNetTrunk, Stem, Vgg, ADAPTER_WIDTH,
    COMPACT_STEM_MAX_RESOLUTION, LEAKY_SLOPE, RESNET18_BLOCKS, RESNET18_WIDTHS, RESNET8_WIDTHS,
};
pub use checkpoint::{CheckpointArchive, CheckpointManifest};
pub use params::{Binding, Mode, ParamStore, SlotKind};

/// Width divisor of the narrow ResNet-18 variant.
pub const NARROW_DIVISOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ArchId {
    Resnet18,
    Resnet18Narrow,
    Resnet8,
    Vgg8,
    MobilenetSmall,
    DrawEncoder,
    DrawDecoder,
    DrawRecovery,
    PatchDiscriminator,
}

impl ArchId {
    pub const ALL: [ArchId; 9] = [
        ArchId::Resnet18,
        ArchId::Resnet18Narrow,
        ArchId::Resnet8,
        ArchId::Vgg8,
        ArchId::MobilenetSmall,
        ArchId::DrawEncoder,
        ArchId::DrawDecoder,
        ArchId::DrawRecovery,
        ArchId::PatchDiscriminator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Resnet18 => "resnet18",
            ArchId::Resnet18Narrow => "resnet18-narrow",
            ArchId::Resnet8 => "resnet8",
            ArchId::Vgg8 => "vgg8",
            ArchId::MobilenetSmall => "mobilenet-small",
            ArchId::DrawEncoder => "draw-encoder",
            ArchId::DrawDecoder => "draw-decoder",
            ArchId::DrawRecovery => "draw-recovery",
            ArchId::PatchDiscriminator => "patch-discriminator",
        }
    }

    pub fn is_classifier(self) -> bool {
        matches!(self, ArchId::Resnet18 | ArchId::Resnet18Narrow | ArchId::Resnet8 | ArchId::Vgg8 | ArchId::MobilenetSmall)
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

impl TryFrom<String> for ArchId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchId> for String {
    fn from(a: ArchId) -> String {
        a.as_str().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub id: ArchId,
    /// Classifier heads only; zero otherwise.
    pub num_classes: usize,
    pub input_resolution: usize,
    /// Channel divisor for ResNet-18 trunks (draw networks follow it too).
    pub width_divisor: usize,
}

impl ArchSpec {
    pub fn classifier(id: ArchId, num_classes: usize, input_resolution: usize) -> Self {
        let width_divisor = if id == ArchId::Resnet18Narrow { NARROW_DIVISOR } else { 1 };
        ArchSpec { id, num_classes, input_resolution, width_divisor }
    }

    pub fn draw(id: ArchId, input_resolution: usize, width_divisor: usize) -> Self {
        ArchSpec { id, num_classes: 0, input_resolution, width_divisor }
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_classifier() && self.num_classes < 2 {
            return Err(Error::InvalidParams(format!("{} needs at least 2 classes", self.id)));
        }
        if self.width_divisor == 0 || RESNET18_WIDTHS[0] % self.width_divisor != 0 {
            return Err(Error::InvalidParams(format!("width divisor {} not supported", self.width_divisor)));
        }
        let min = match self.id {
            ArchId::Vgg8 => 8,
            _ => 16,
        };
        if self.input_resolution < min || self.input_resolution % min != 0 {
            return Err(Error::InvalidParams(format!(
                "{} needs an input resolution that is a positive multiple of {min}",
                self.id
            )));
        }
        Ok(())
    }

    fn resnet18_widths(&self) -> Vec<usize> {
        RESNET18_WIDTHS.iter().map(|w| w / self.width_divisor).collect()
    }
}

#[derive(Clone, Debug)]
enum Body {
    ResNet(ResNet),
    Vgg(Vgg),
    MobileNet(MobileNet),
    Encoder(DrawEncoder),
    Decoder(DrawDecoder),
    Recovery(Recovery),
    Discriminator(PatchDiscriminator),
}

/// Tape handles produced by a classifier forward pass.
#[derive(Clone, Debug)]
pub struct ClassifierOutput {
    pub logits: Var,
    /// `[N, D]` features feeding the classification head.
    pub penultimate: Var,
    /// Named convolutional feature maps, shallowest first.
    pub feature_maps: Vec<(String, Var)>,
}

impl ClassifierOutput {
    pub fn feature_map(&self, name: &str) -> Result<Var> {
        self.feature_maps
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }
}

/// Tape handles produced by the drawing encoder.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Trunk stage outputs before fusion, `layer1` first.
    pub stages: Vec<Var>,
    pub fused: Var,
}

#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    spec: ArchSpec,
    params: ParamStore<T>,
    body: Body,
}

impl<T: Scalar> Network<T> {
    /// Builds a network and initializes its parameters from `seed`.
    pub fn build(spec: ArchSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let body = match spec.id {
            ArchId::Resnet18 | ArchId::Resnet18Narrow => {
                let stem =
                    if spec.input_resolution <= COMPACT_STEM_MAX_RESOLUTION { Stem::Compact } else { Stem::Standard };
                Body::ResNet(ResNet::new(ResNetTrunk::new(stem, &spec.resnet18_widths(), &RESNET18_BLOCKS), spec.num_classes))
            }
            ArchId::Resnet8 => {
                Body::ResNet(ResNet::new(ResNetTrunk::new(Stem::Strided, &RESNET8_WIDTHS, &[1, 1, 1]), spec.num_classes))
            }
            ArchId::Vgg8 => Body::Vgg(Vgg::new(spec.input_resolution, spec.num_classes)),
            ArchId::MobilenetSmall => Body::MobileNet(MobileNet::new(spec.num_classes)),
            ArchId::DrawEncoder => {
                Body::Encoder(DrawEncoder::new(&spec.resnet18_widths(), ADAPTER_WIDTH / spec.width_divisor))
            }
            ArchId::DrawDecoder => Body::Decoder(DrawDecoder::new(ADAPTER_WIDTH / spec.width_divisor)),
            ArchId::DrawRecovery => Body::Recovery(Recovery::new()),
            ArchId::PatchDiscriminator => Body::Discriminator(PatchDiscriminator::new()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        match &body {
            Body::ResNet(r) => {
                r.trunk.declare(&mut params, &mut rng);
                r.fc.declare(&mut params, &mut rng);
            }
            Body::Vgg(v) => {
                v.convs.iter().for_each(|c| c.declare(&mut params, &mut rng));
                v.fc1.declare(&mut params, &mut rng);
                v.fc2.declare(&mut params, &mut rng);
            }
            Body::MobileNet(m) => {
                m.stem.declare(&mut params, &mut rng);
                for (dw, pw) in &m.blocks {
                    dw.declare(&mut params, &mut rng);
                    pw.declare(&mut params, &mut rng);
                }
                m.fc.declare(&mut params, &mut rng);
            }
            Body::Encoder(e) => {
                e.trunk.declare(&mut params, &mut rng);
                e.adapter.declare(&mut params, &mut rng);
            }
            Body::Decoder(d) => {
                d.up1.declare(&mut params, &mut rng);
                d.up2.declare(&mut params, &mut rng);
                d.out.declare(&mut params, &mut rng);
            }
            Body::Recovery(r) => r.convs.iter().for_each(|c| c.declare(&mut params, &mut rng)),
            Body::Discriminator(d) => d.convs.iter().for_each(|c| c.declare(&mut params, &mut rng)),
        }
        Ok(Network { spec, params, body })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn is_classifier(&self) -> bool {
        self.spec.id.is_classifier()
    }

    /// Width of the penultimate feature vector of a classifier.
    pub fn penultimate_width(&self) -> Option<usize> {
        match &self.body {
            Body::ResNet(r) => Some(r.trunk.out_width()),
            Body::Vgg(v) => Some(v.fc1.out_features),
            Body::MobileNet(m) => Some(m.fc.in_features),
            _ => None,
        }
    }

    /// Name of the last convolutional feature map (default Grad-CAM and tuning-curve target).
    pub fn final_conv_layer(&self) -> Option<String> {
        match &self.body {
            Body::ResNet(r) => Some(format!("layer{}", r.trunk.stages.len())),
            Body::Vgg(_) | Body::MobileNet(_) => Some("features".to_string()),
            _ => None,
        }
    }

    /// Classifier forward pass on a `[3, N, H, W]` input.
    pub fn classify(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Result<ClassifierOutput> {
        match &self.body {
            Body::ResNet(r) => {
                let stages = r.trunk.forward(tape, bind, x);
                let last = *stages.last().expect("nonempty trunk");
                let pooled = tape.global_avg_pool(last);
                let logits = r.fc.forward(tape, bind, pooled);
                let feature_maps = stages.iter().enumerate().map(|(i, &v)| (format!("layer{}", i + 1), v)).collect();
                Ok(ClassifierOutput { logits, penultimate: pooled, feature_maps })
            }
            Body::Vgg(v) => {
                let mut y = x;
                for (i, conv) in v.convs.iter().enumerate() {
                    y = conv.forward(tape, bind, y, true);
                    if i % 2 == 1 {
                        y = tape.max_pool(y, 2, 2, 0);
                    }
                }
                let features = y;
                let flat = tape.flatten(features);
                let hidden = v.fc1.forward(tape, bind, flat);
                let hidden = tape.relu(hidden);
                let logits = v.fc2.forward(tape, bind, hidden);
                Ok(ClassifierOutput { logits, penultimate: hidden, feature_maps: vec![("features".into(), features)] })
            }
            Body::MobileNet(m) => {
                let mut y = m.stem.forward(tape, bind, x, true);
                for (dw, pw) in &m.blocks {
                    y = dw.forward(tape, bind, y, true);
                    y = pw.forward(tape, bind, y, true);
                }
                let pooled = tape.global_avg_pool(y);
                let logits = m.fc.forward(tape, bind, pooled);
                Ok(ClassifierOutput { logits, penultimate: pooled, feature_maps: vec![("features".into(), y)] })
            }
            _ => Err(Error::ArchIncompatible(format!("{} is not a classifier", self.spec.id))),
        }
    }

    /// Drawing-encoder forward pass on a `[3, N, H, W]` input.
    pub fn encode(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Result<EncoderOutput> {
        let Body::Encoder(e) = &self.body else {
            return Err(Error::ArchIncompatible(format!("{} is not a draw encoder", self.spec.id)));
        };
        let stages = e.trunk.forward(tape, bind, x);
        let up3 = tape.upsample_nearest(stages[2], 2);
        let up4 = tape.upsample_nearest(stages[3], 4);
        let cat = tape.concat(&[stages[1], up3, up4]);
        let fused = e.adapter.forward(tape, bind, cat, true);
        Ok(EncoderOutput { stages, fused })
    }

    /// Forward pass of single-input image-to-image networks (decoder, recovery, discriminator).
    pub fn apply(&self, tape: &mut Tape<T>, bind: &mut Binding<'_, T>, x: Var) -> Result<Var> {
        match &self.body {
            Body::Decoder(d) => {
                let y = d.up1.forward(tape, bind, x);
                let y = tape.relu(y);
                let y = d.up2.forward(tape, bind, y);
                let y = tape.relu(y);
                let y = d.out.forward(tape, bind, y);
                Ok(tape.sigmoid(y))
            }
            Body::Recovery(r) => {
                let y = r.convs[0].forward(tape, bind, x);
                let y = tape.relu(y);
                let y = r.convs[1].forward(tape, bind, y);
                let y = tape.relu(y);
                let y = r.convs[2].forward(tape, bind, y);
                Ok(tape.sigmoid(y))
            }
            Body::Discriminator(d) => {
                let slope = T::lit(LEAKY_SLOPE);
                let y = d.convs[0].forward(tape, bind, x);
                let y = tape.leaky_relu(y, slope);
                let y = d.convs[1].forward(tape, bind, y);
                let y = tape.leaky_relu(y, slope);
                Ok(d.convs[2].forward(tape, bind, y))
            }
            _ => Err(Error::ArchIncompatible(format!("{} has no single-input forward", self.spec.id))),
        }
    }

    /// Gradient-free evaluation-mode logits for a batch.
    pub fn predict_logits(&self, batch: &ImageBatch<T>) -> Result<Tensor<T>> {
        self.eval_rows(batch, |out| out.logits)
    }

    /// Runs evaluation-mode forward passes in chunks and stacks one `[n, D]` output per chunk.
    fn eval_rows(&self, batch: &ImageBatch<T>, pick: impl Fn(&ClassifierOutput) -> Var) -> Result<Tensor<T>> {
        let mut data = Vec::new();
        let mut width = self.spec.num_classes;
        for start in (0..batch.len()).step_by(EVAL_CHUNK) {
            let chunk = batch.slice(start..(start + EVAL_CHUNK).min(batch.len()));
            let mut tape = Tape::new();
            let mut bind = Binding::frozen(&self.params);
            let x = tape.constant(chunk.to_tensor());
            let out = self.classify(&mut tape, &mut bind, x)?;
            let value = tape.value(pick(&out));
            width = value.shape()[1];
            data.extend_from_slice(value.data());
        }
        Tensor::from_vec(&[batch.len(), width], data)
    }
}

/// Images per forward pass during gradient-free evaluation.
pub const EVAL_CHUNK: usize = 64;

/// Builds a classifier from a classifier architecture id.
pub fn build_classifier<T: Scalar>(spec: ArchSpec, seed: u64) -> Result<Network<T>> {
    if !spec.id.is_classifier() {
        return Err(Error::UnknownArchitecture(format!("{} is not a classifier architecture", spec.id)));
    }
    Network::build(spec, seed)
}

/// The four learning-to-draw networks.
#[derive(Clone, Debug)]
pub struct DrawNetworks<T: Scalar> {
    pub encoder: Network<T>,
    pub decoder: Network<T>,
    pub recovery: Network<T>,
    pub discriminator: Network<T>,
}

pub fn build_draw_networks<T: Scalar>(resolution: usize, width_divisor: usize, seed: u64) -> Result<DrawNetworks<T>> {
    let spec = |id| ArchSpec::draw(id, resolution, width_divisor);
    Ok(DrawNetworks {
        encoder: Network::build(spec(ArchId::DrawEncoder), seed)?,
        decoder: Network::build(spec(ArchId::DrawDecoder), seed.wrapping_add(1))?,
        recovery: Network::build(spec(ArchId::DrawRecovery), seed.wrapping_add(2))?,
        discriminator: Network::build(spec(ArchId::PatchDiscriminator), seed.wrapping_add(3))?,
    })
}

/// Builds a ResNet-18 classifier whose trunk is copied from a drawing encoder.
///
/// Trunk tensors are copied wherever name and shape agree (the stem too when
/// both use the compact stem); the fusion adapter is dropped and the head is
/// freshly initialized from `seed`.
pub fn init_classifier_from_encoder<T: Scalar>(
    encoder: &CheckpointArchive<T>,
    num_classes: usize,
    seed: u64,
) -> Result<Network<T>> {
    let arch = &encoder.manifest.arch;
    if arch.id != ArchId::DrawEncoder {
        return Err(Error::ArchIncompatible(format!("expected a draw-encoder checkpoint, got {}", arch.id)));
    }
    let id = if arch.width_divisor == 1 { ArchId::Resnet18 } else { ArchId::Resnet18Narrow };
    if id == ArchId::Resnet18Narrow && arch.width_divisor != NARROW_DIVISOR {
        return Err(Error::ArchIncompatible(format!("no classifier with width divisor {}", arch.width_divisor)));
    }
    let mut net = build_classifier::<T>(ArchSpec::classifier(id, num_classes, arch.input_resolution), seed)?;
    let names: Vec<String> = net.params.names().filter(|n| n.starts_with("trunk.")).map(str::to_string).collect();
    for name in names {
        if let Some(t) = encoder.params.get(&name) {
            if t.shape() == net.params.tensor(&name).shape() {
                net.params.set(&name, t.clone())?;
            }
        }
    }
    Ok(net)
}

/// `[N, D]` penultimate activations in evaluation mode.
pub fn penultimate_features<T: Scalar>(model: &Network<T>, batch: &ImageBatch<T>) -> Result<Tensor<T>> {
    if !model.is_classifier() {
        return Err(Error::ArchIncompatible(format!("{} is not a classifier", model.spec.id)));
    }
    let mut out = model.eval_rows(batch, |o| o.penultimate)?;
    if batch.is_empty() {
        out = Tensor::zeros(&[0, model.penultimate_width().unwrap_or(0)]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
