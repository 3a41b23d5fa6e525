//! Minimal neural toolkit: tensors, reverse-mode tape, MLP, Adam and
//! Gaussian helpers.

pub mod adam;
pub mod gaussian;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gaussian::{kl_divergence, reparameterize, GaussianParams, KlDirection};
pub use mlp::{backward, mlp_forward, Mlp, MlpConfig, MlpForward, Mode};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, KinematicTree, Tape, Var};
pub use tensor::Tensor;
