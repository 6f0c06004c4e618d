pub mod error;
pub mod estimation;
pub mod insar;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod report;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ComplexMatrix, ComplexTensor3};
