//! A small reverse-mode autodiff engine and the layer helpers the models
//! share.

mod attention;
mod conv;
mod graph;
pub mod layers;
mod ops;
mod tensor;

pub use conv::Conv3dSpec;
pub use graph::{Gradients, Graph, Var};
pub use ops::softmax;
pub use tensor::{Scalar, Tensor};

