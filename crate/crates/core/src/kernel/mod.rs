//! Dense tensors, a reverse-mode tape, and the Adam optimizer.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use optim::{adam_step, AdamConfig, OptimState};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::{argmax, log_softmax, sigmoid, softmax, Tensor};
