pub mod analyze;
pub mod dataset;
pub mod emergence;
pub mod eval;
pub mod pool;
pub mod train;
pub mod visualize;
