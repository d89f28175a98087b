//! Autodiff engine, model zoo and group structures for training with the
//! WGSEF regularizer.

pub mod autodiff;
mod chain;
pub mod compact;
pub mod error;
pub mod flops;
pub mod gradcheck;
pub mod grouping;
pub mod io;
mod linalg;
pub mod models;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{NnError, Result};
pub use grouping::{make_groups, GroupingScheme};
pub use models::{Architecture, Model, ModelSpec, Targets, Task};
pub use tensor::Tensor;
