//! Minimal dense-tensor reverse-mode autodiff, optimizer, and learning-rate
//! schedule. Everything is f64 and single-threaded per graph.

mod adam;
mod graph;
mod schedule;
mod tensor;

pub use adam::AdamState;
pub use graph::{Graph, NodeId};
pub use schedule::CosineSchedule;
pub use tensor::Tensor;
