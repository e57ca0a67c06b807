//! Dense networks, activations, the ADAM optimizer and checkpoint I/O.

mod activation;
mod adam;
mod checkpoint;
mod mlp;

pub use activation::{
    leaky_relu, leaky_relu_derivative, relu, relu_derivative, tanh, tanh_derivative, Activation,
    DEFAULT_LEAKY_SLOPE,
};
pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, sha256_hex, write_checkpoint, Metadata,
    MODEL_FORMAT,
};
pub use mlp::{ActivationCache, DenseLayer, Gradients, LayerGrad, LayerSpec, MlpModel, Mode};
