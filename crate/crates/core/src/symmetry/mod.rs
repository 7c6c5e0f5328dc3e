//! Weight-space transforms and their action on policy networks.

mod action;
mod norm;
mod op;

pub use action::{apply, apply_ff, apply_rnn, check_deviation, check_invariance, is_invariant};
pub use norm::{min_norm_scaling, min_norm_scaling_from, scaled_theta_norm, theta_norm, MinNormConfig};
pub use op::{
    invert_perm, is_permutation, perm_from_matrix, perm_matrix, random_perm_op, random_perm_op_with,
    random_scaled_op, TransformKind, TransformOp, DET_THRESHOLD,
};
