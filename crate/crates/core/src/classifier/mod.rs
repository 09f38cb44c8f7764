//! ReLU MLP over pseudo-labeled sub-clusters: forward pass with temperature,
//! analytic parameter and input gradients, SGD training and checkpoints.

mod checkpoint;
mod mlp;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use mlp::{
    forward, init_model, input_gradient, input_gradients, loss_and_grads, DenseLayer, Forward, Gradients, MlpModel,
};
pub use train::{cosine_lr, train, TrainConfig, TrainReport};
