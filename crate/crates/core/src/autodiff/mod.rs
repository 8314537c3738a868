//! Minimal reverse-mode automatic differentiation over dense tensors: the
//! numeric substrate under every model.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use params::{ParamEntry, ParamId, Params};
pub use tape::{argmax, sample_index, AdError, NodeId, Tape};
pub use tensor::Tensor;
