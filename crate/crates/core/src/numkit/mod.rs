//! Dense networks, backprop, Adam, and target-network utilities.

mod adam;
mod embed;
pub mod io;
mod mlp;

pub use adam::{soft_update, soft_update_in_place, AdamConfig, AdamState};
pub use embed::sinusoidal_embedding;
pub use mlp::{Activation, ForwardTape, GradBundle, Layer, MlpGrads, MlpParams};
