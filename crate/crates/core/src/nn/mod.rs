//! Feedforward and Elman-RNN policy networks.

mod activation;
mod data;
mod forward;
mod loss;
mod network;
mod train;

pub use activation::Activation;
pub use data::{load_dataset, save_dataset, Dataset, Trajectory};
pub use forward::{forward_ff, forward_rnn, predict, RolloutState};
pub use loss::{batch_grad, bc_grad, bc_loss, dataset_loss, mean_loss};
pub use network::{Arch, Layer, NetworkParams};
pub use train::{sgd_train, sgd_train_logged, TrainConfig};
