//! The dense ReLU network attacked in white-box mode.

mod model;
mod network;
mod train;

pub use model::{MlpModel, TrainMeta, HIDDEN_LAYERS, LAYER_SIZES, MLP_FORMAT};
pub use network::{Dense, ForwardCache, Network, Objective, Surrogate, BOX_TOLERANCE};
pub use train::{train_network, LossCurve, TrainConfig};
