//! Weight-space alignment and merging of control policies.

pub mod align;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod linmerge;
pub mod lqg;
pub mod merge;
pub mod nn;
pub mod seed;
pub mod symmetry;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use nn::{Activation, Arch, NetworkParams, RolloutState, Trajectory};
pub use symmetry::{TransformKind, TransformOp};
