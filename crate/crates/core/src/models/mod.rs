//! Minimal feedforward networks with analytic input and weight gradients.

mod checkpoint;
mod layer;
mod loss;
mod network;

pub use checkpoint::{read_checkpoint, write_checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use layer::LayerSpec;
pub use loss::{lipschitz_bound_hat_loss, LossKind};
pub use network::{equal_param_width, Network};
