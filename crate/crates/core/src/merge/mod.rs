//! Merge operators over sets of networks and interpolation barriers.

mod average;
mod barrier;
mod fleet;
mod many;

pub use average::{aligned_average, naive_average};
pub use barrier::{loss_barrier, performance_barrier, BarrierReport, Interpolate, DEFAULT_GRID};
pub use fleet::{fleet_merge, FleetMergeOutput, FleetMetric, MergeConfig};
pub use many::{merge_many, MergeManyOutput};
