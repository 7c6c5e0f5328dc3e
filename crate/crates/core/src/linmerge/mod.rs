//! Merging of linear dynamic policies up to a change of latent coordinates.

mod equivalence;
mod invertible;
mod perm;
mod state;

pub use equivalence::{policy_equivalent, sign_flip_pair, EquivalenceWitness};
pub use invertible::{grad_invertible_merge, invertible_merge_step, InvertibleMergeConfig};
pub use perm::{perm_alternate_merge, perm_merge_step};
pub use state::{alignment_objective, alignment_residual, LinearMergeKind, LinearMergeState, MergeRound};
