//! Numerical kernels shared by every stage of the network.

pub mod activation;
pub mod attention;
pub mod conv;
pub mod gemm;
pub mod linear;
pub mod norm;

pub use activation::{activation, sigmoid, Activation};
pub use attention::{
    attention_probs, encoder_layer, multi_head_attention, self_attention, softmax_in_place,
    AttentionSpec, EncoderLayer, LayerNormParams, LAYER_NORM_EPS,
};
pub use conv::{conv2d, ConvSpec};
pub use linear::linear;
pub use norm::{batch_norm_inference, layer_norm};
