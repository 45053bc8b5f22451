//! Line-drawing pretraining lab: data, networks, training and probes.

pub mod autograd;
pub mod corpus;
pub mod distill;
pub mod draw;
pub mod error;
pub mod nets;
pub mod optim;
pub mod probe;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type LabeledImage32 = corpus::LabeledImage<f32>;
pub type ImageBatch32 = corpus::ImageBatch<f32>;
pub type Dataset32 = corpus::Dataset<f32>;
pub type Network32 = nets::Network<f32>;
pub type Network64 = nets::Network<f64>;
pub type CheckpointArchive32 = nets::CheckpointArchive<f32>;
