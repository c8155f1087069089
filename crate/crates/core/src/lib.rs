pub mod adapt;
pub mod checkpoint;
pub mod data;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod memory;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Gradients, Graph, Tensor, Var};
