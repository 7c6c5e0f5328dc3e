use super::lap::{solve_lap, AssignmentProblem};
use crate::error::Result;
use crate::linalg::{frob_dot, Matrix};
use crate::nn::NetworkParams;
use crate::symmetry::{perm_matrix, TransformOp};

pub const MAX_SWEEPS: usize = 100;

/// Result of weight matching together with the objective after each sweep.
#[derive(Clone, Debug)]
pub struct WeightMatchReport {
    pub op: TransformOp,
    pub objective_history: Vec<f64>,
    pub sweeps: usize,
}

/// `Σ_l <P_{l+1} W P_l^T, W_ref> + <P_{l+1} b, b_ref> + <P W_rec P^T, W_rec_ref>`.
pub fn matching_objective(theta: &NetworkParams, reference: &NetworkParams, mats: &[Matrix]) -> f64 {
    let mut total = 0.0;
    for (l, (a, r)) in theta.layers.iter().zip(&reference.layers).enumerate() {
        let p_in = &mats[l];
        let p_out = &mats[l + 1];
        total += frob_dot(&(p_out * &a.w_ff * p_in.transpose()), &r.w_ff);
        total += (p_out * &a.b).dot(&r.b);
        if let (Some(wa), Some(wr)) = (&a.w_rec, &r.w_rec) {
            total += frob_dot(&(p_out * wa * p_out.transpose()), wr);
        }
    }
    total
}

/// Linear score `S` whose assignment maximizes the terms touching hidden layer `l`.
///
/// The recurrent term is quadratic in `P_l`; it is linearized at the current `P_l`.
fn layer_score(theta: &NetworkParams, reference: &NetworkParams, mats: &[Matrix], l: usize) -> Matrix {
    let below_t = &theta.layers[l - 1];
    let below_r = &reference.layers[l - 1];
    let above_t = &theta.layers[l];
    let above_r = &reference.layers[l];
    let mut s = &below_r.w_ff * &mats[l - 1] * below_t.w_ff.transpose();
    s += above_r.w_ff.transpose() * &mats[l + 1] * &above_t.w_ff;
    s += &below_r.b * below_t.b.transpose();
    if let (Some(wt), Some(wr)) = (&below_t.w_rec, &below_r.w_rec) {
        let p = &mats[l];
        s += wr * p * wt.transpose() + wr.transpose() * p * wt;
    }
    s
}

/// Coordinate-descent weight matching of `theta` onto `reference`.
pub fn weight_match_align(theta: &NetworkParams, reference: &NetworkParams) -> Result<TransformOp> {
    Ok(weight_match_report(theta, reference)?.op)
}

/// Sweeps hidden layers `1..L-1` in order, solving one assignment per layer, until a
/// whole sweep changes nothing (at most [`MAX_SWEEPS`]). A new permutation is only
/// kept if it strictly raises the objective, so the history is non-decreasing.
pub fn weight_match_report(theta: &NetworkParams, reference: &NetworkParams) -> Result<WeightMatchReport> {
    theta.ensure_same_shape(reference)?;
    let dims = &theta.layer_dims;
    let n_layers = theta.num_layers();
    let mut mats: Vec<Matrix> = dims.iter().map(|&d| Matrix::identity(d, d)).collect();
    let mut perms: Vec<Vec<usize>> = dims.iter().map(|&d| (0..d).collect()).collect();
    let mut objective = matching_objective(theta, reference, &mats);
    let mut history = vec![objective];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut changed = false;
        for l in 1..n_layers {
            let s = layer_score(theta, reference, &mats, l);
            let (perm, _) = solve_lap(&AssignmentProblem::max(s))?;
            if perm == perms[l] {
                continue;
            }
            let old = std::mem::replace(&mut mats[l], perm_matrix(&perm));
            let candidate = matching_objective(theta, reference, &mats);
            if candidate > objective + 1e-12 * objective.abs().max(1.0) {
                objective = candidate;
                perms[l] = perm;
                changed = true;
            } else {
                mats[l] = old;
            }
        }
        history.push(objective);
        if !changed {
            break;
        }
    }
    let op = TransformOp::from_perms(dims, &perms[1..dims.len() - 1])?;
    Ok(WeightMatchReport {
        op,
        objective_history: history,
        sweeps,
    })
}
