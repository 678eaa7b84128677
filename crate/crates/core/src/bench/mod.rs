//! Ground truth, FDR/TPR measurement, power curves and the synthetic
//! benchmark table.

mod metrics;
mod table1;

pub use metrics::*;
pub use table1::*;
