//! Small dense-tensor core: layers with analytic gradients, FLOPs
//! accounting, a finite-difference gradient checker and the parameter
//! checkpoint format.
//!
//! FLOPs convention: one multiply-accumulate counts as 2 FLOPs. Each layer
//! documents how it counts its element-wise work.

pub mod activation;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod layer;
mod module;
pub mod norm;
pub mod pool;
mod tensor;

pub use activation::{sigmoid, softmax, Relu, Sigmoid, Softmax};
pub use attention::{channel_shuffle, shuffle_permutation, ChannelAttention, Eca, ShuffleAttention, SpatialAttention};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use conv::Conv2d;
pub use dense::Dense;
pub use gradcheck::{gradcheck, GradcheckReport};
pub use gru::GruCell;
pub use layer::{Layer, LayerKind, Sequential};
pub use module::{Gradients, Module};
pub use norm::GroupNorm;
pub use pool::{GlobalAvgPool, MaxPool};
pub use tensor::Tensor;
