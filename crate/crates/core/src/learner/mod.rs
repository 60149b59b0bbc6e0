//! The predictor network, its optimizer, and the penalized training loop.

mod adam;
mod mlp;
mod predictor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{mlp_backward, mlp_forward, Activation, Gradients, Mlp, Tape};
pub use predictor::{
    ColumnSource, Network, Predictor, Residualizer, Standardizer, Task, CHECKPOINT_FORMAT,
};
pub use train::{
    dataset_loss, prediction_loss, train_cip, train_cip_with_test, train_predictor, EpochRecord,
    TrainConfig, TrainHistory,
};
