//! Geometric probes over model activations: gold structures, probe training,
//! evaluation metrics and cross-checkpoint analysis.

pub mod analysis;
pub mod dataset;
pub mod gold;
pub mod metrics;
pub mod probe;
pub mod synthetic;
pub mod tensor_io;
