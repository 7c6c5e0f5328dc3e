//! Alignment solvers: assignment, Sinkhorn projection, weight matching and
//! gradient-based soft permutation search.

mod lap;
mod sinkhorn;
mod soft;
mod weight_match;

pub use lap::{brute_force_lap, next_permutation, solve_lap, AssignmentProblem, Sense};
pub use sinkhorn::{
    hard_round, sinkhorn_normalize, sinkhorn_project, sinkhorn_unrolled, sinkhorn_vjp, SinkhornConfig,
};
pub use soft::{
    hard_round_op, soft_grad_align, soft_grad_align_from, soft_loss_grad, SoftAlignConfig, SoftAlignOutput,
    SoftUpdate,
};
pub use weight_match::{
    matching_objective, weight_match_align, weight_match_report, WeightMatchReport, MAX_SWEEPS,
};
