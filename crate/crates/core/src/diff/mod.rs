//! Dense reverse-mode autodiff, multilayer perceptrons and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{
    hard_update, soft_update, Activation, Grad, Head, Mlp, MlpSnapshot, Param, Parameterized, FINAL_LAYER_INIT,
};
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softplus;
