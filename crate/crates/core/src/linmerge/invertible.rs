use super::state::{alignment_objective, check_policies, LinearMergeKind, LinearMergeState, MergeRound};
use crate::error::{Error, Result};
use crate::lqg::{is_degenerate, LinearPolicy};
use crate::linalg::{solve, Matrix};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertibleMergeConfig {
    pub lr: f64,
    pub steps: usize,
    /// Gradient steps on the transforms between exact solves for the merged policy.
    pub alt_period: usize,
}

impl Default for InvertibleMergeConfig {
    fn default() -> Self {
        Self { lr: 0.01, steps: 5000, alt_period: 50 }
    }
}

impl InvertibleMergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if self.alt_period == 0 {
            return Err(Error::Config("alt_period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Exact minimizer of the objective over the merged policy for fixed transforms.
///
/// With `M = sum P_i' P_i`: `Ā = M^{-1} sum P_i' A_i P_i`, `B̄ = M^{-1} sum P_i' B_i`, `C̄ = mean C_i P_i`.
pub fn invertible_merge_step(policies: &[LinearPolicy], ops: &[Matrix]) -> Result<LinearPolicy> {
    let first = &policies[0];
    let k = first.latent_dim();
    let mut gram = Matrix::zeros(k, k);
    let mut a = Matrix::zeros(k, k);
    let mut b = Matrix::zeros(k, first.obs_dim());
    let mut c = Matrix::zeros(first.act_dim(), k);
    for (pol, p) in policies.iter().zip(ops) {
        gram += p.transpose() * p;
        a += p.transpose() * &pol.a * p;
        b += p.transpose() * &pol.b;
        c += &pol.c * p;
    }
    Ok(LinearPolicy { a: solve(&gram, &a)?, b: solve(&gram, &b)?, c: c / policies.len() as f64 })
}

/// Gradient of one policy's residual with respect to its transform.
fn transform_grad(theta_bar: &LinearPolicy, policy: &LinearPolicy, p: &Matrix) -> Matrix {
    let ra = p * &theta_bar.a - &policy.a * p;
    let rb = p * &theta_bar.b - &policy.b;
    let rc = &theta_bar.c - &policy.c * p;
    2.0 * (&ra * theta_bar.a.transpose() - policy.a.transpose() * &ra + rb * theta_bar.b.transpose() - policy.c.transpose() * rc)
}

/// Block-coordinate descent over unconstrained transforms and the merged policy.
///
/// Transforms start at identity and the merged policy at the first input, so the
/// first gradient phase aligns every policy to a concrete anchor. Each phase of
/// `alt_period` gradient steps is followed by the exact merge step.
pub fn grad_invertible_merge(policies: &[LinearPolicy], cfg: &InvertibleMergeConfig) -> Result<LinearMergeState> {
    check_policies(policies)?;
    cfg.validate()?;
    let k = policies[0].latent_dim();
    let mut ops = vec![Matrix::identity(k, k); policies.len()];
    let mut theta_bar = policies[0].clone();
    let (objective, witness) = alignment_objective(&theta_bar, policies, &ops);
    let mut history = vec![MergeRound { round: 0, objective, witness }];
    let mut round = 0;
    let mut step = 0;
    loop {
        let phase = cfg.alt_period.min(cfg.steps - step);
        for _ in 0..phase {
            for (pol, p) in policies.iter().zip(ops.iter_mut()) {
                let g = transform_grad(&theta_bar, pol, p);
                *p -= cfg.lr * g;
            }
        }
        step += phase;
        if ops.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!("transform diverged by step {step}; lower lr")));
        }
        theta_bar = invertible_merge_step(policies, &ops)?;
        for (i, p) in ops.iter().enumerate() {
            if is_degenerate(p) {
                log::warn!("transform {i} is nearly singular after {step} steps");
            }
        }
        round += 1;
        let (objective, witness) = alignment_objective(&theta_bar, policies, &ops);
        history.push(MergeRound { round, objective, witness });
        if step >= cfg.steps {
            break;
        }
    }
    Ok(LinearMergeState { theta_bar, ops, kind: LinearMergeKind::Invertible, history })
}
