//! Small feed-forward and recurrent forecasters written from scratch:
//! MLP, 1-D CNN, Elman RNN and LSTM with exact reverse-mode gradients,
//! z-score normalization, Adam mini-batch training and early stopping.

mod activation;
mod error;
pub mod gradcheck;
pub mod model_file;
pub mod net;
pub mod normalize;
pub mod params;
pub mod spec;
pub mod train;

pub use error::NetError;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model_file::{ModelFile, MODEL_FORMAT_VERSION};
pub use net::{forward, loss, loss_and_gradient, mse};
pub use normalize::Normalizer;
pub use params::NetParams;
pub use spec::{design_grid, Activation, Arch, NetSpec};
pub use train::{train, Dataset, EarlyStopping, History, StopDecision, TrainConfig};
