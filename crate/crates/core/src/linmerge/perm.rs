use super::state::{alignment_objective, alignment_residual, check_policies, LinearMergeKind, LinearMergeState, MergeRound};
use crate::align::{solve_lap, AssignmentProblem};
use crate::error::{Error, Result};
use crate::lqg::LinearPolicy;
use crate::linalg::Matrix;
use crate::symmetry::perm_matrix;

/// Mean of `(P_i' A_i P_i, P_i' B_i, C_i P_i)`: the minimizer for fixed orthogonal `P_i`.
pub fn perm_merge_step(policies: &[LinearPolicy], ops: &[Matrix]) -> LinearPolicy {
    let n = policies.len() as f64;
    let first = &policies[0];
    let mut a = Matrix::zeros(first.a.nrows(), first.a.ncols());
    let mut b = Matrix::zeros(first.b.nrows(), first.b.ncols());
    let mut c = Matrix::zeros(first.c.nrows(), first.c.ncols());
    for (pol, p) in policies.iter().zip(ops) {
        a += p.transpose() * &pol.a * p;
        b += p.transpose() * &pol.b;
        c += &pol.c * p;
    }
    LinearPolicy { a: a / n, b: b / n, c: c / n }
}

/// Linearized aligning score `A_i' P_prev Ā + B_i B̄' + C_i' C̄`.
fn align_score(theta_bar: &LinearPolicy, policy: &LinearPolicy, prev: &Matrix) -> Matrix {
    policy.a.transpose() * prev * &theta_bar.a + &policy.b * theta_bar.b.transpose() + policy.c.transpose() * &theta_bar.c
}

/// Alternates per-policy assignment problems with the averaging step.
///
/// Permutations start at identity and the merged policy at the first input. A new
/// permutation is kept only when it lowers that policy's residual, so the objective
/// never increases. Stops after a round in which no permutation changes, or after
/// `max_rounds`.
pub fn perm_alternate_merge(policies: &[LinearPolicy], max_rounds: usize) -> Result<LinearMergeState> {
    check_policies(policies)?;
    if policies.len() < 2 {
        return Err(Error::Precondition("merging needs at least two policies".into()));
    }
    let k = policies[0].latent_dim();
    let mut ops = vec![Matrix::identity(k, k); policies.len()];
    let mut theta_bar = policies[0].clone();
    let (objective, witness) = alignment_objective(&theta_bar, policies, &ops);
    let mut history = vec![MergeRound { round: 0, objective, witness }];
    for round in 1..=max_rounds.max(1) {
        let mut changed = false;
        for (pol, op) in policies.iter().zip(ops.iter_mut()) {
            let (perm, _) = solve_lap(&AssignmentProblem::max(align_score(&theta_bar, pol, op)))?;
            let candidate = perm_matrix(&perm);
            if candidate != *op && alignment_residual(&theta_bar, pol, &candidate) < alignment_residual(&theta_bar, pol, op) {
                *op = candidate;
                changed = true;
            }
        }
        theta_bar = perm_merge_step(policies, &ops);
        let (objective, witness) = alignment_objective(&theta_bar, policies, &ops);
        let prev = history.last().unwrap().objective;
        assert!(objective <= prev + 1e-9 * (1.0 + prev), "alternation increased the objective: {prev} -> {objective}");
        history.push(MergeRound { round, objective, witness });
        if !changed {
            break;
        }
    }
    Ok(LinearMergeState { theta_bar, ops, kind: LinearMergeKind::HardPerm, history })
}
