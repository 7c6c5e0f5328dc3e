use super::policy::LinearPolicy;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{randn_matrix, Matrix, Vector};
use crate::nn::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicTrainConfig {
    pub latent_dim: usize,
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DynamicTrainConfig {
    fn default() -> Self {
        Self { latent_dim: 4, iters: 5000, lr: 1e-4, seed: 0 }
    }
}

/// Gradients of the imitation loss with respect to the three policy matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrad {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

/// `sum_t ||u_t - û_t||^2` for the policy driven by the trajectory's observations.
pub fn imitation_loss(policy: &LinearPolicy, traj: &Trajectory) -> Result<f64> {
    let preds = policy.respond(&traj.observations)?;
    check_actions(policy, traj)?;
    Ok(preds.iter().zip(&traj.actions).map(|(p, u)| (p - u).norm_squared()).sum())
}

fn check_actions(policy: &LinearPolicy, traj: &Trajectory) -> Result<()> {
    match traj.actions.iter().find(|u| u.len() != policy.act_dim()) {
        Some(u) => Err(dim_err("expert action", policy.act_dim().to_string(), u.len().to_string())),
        None => Ok(()),
    }
}

/// Loss and exact gradient by backpropagation through the whole recursion.
pub fn imitation_grad(policy: &LinearPolicy, traj: &Trajectory) -> Result<(f64, PolicyGrad)> {
    check_actions(policy, traj)?;
    let k = policy.latent_dim();
    let mut states = Vec::with_capacity(traj.len() + 1);
    states.push(Vector::zeros(k));
    for y in &traj.observations {
        if y.len() != policy.obs_dim() {
            return Err(dim_err("observation", policy.obs_dim().to_string(), y.len().to_string()));
        }
        let next = &policy.a * states.last().unwrap() + &policy.b * y;
        states.push(next);
    }
    let mut loss = 0.0;
    let mut grad = PolicyGrad {
        a: Matrix::zeros(k, k),
        b: Matrix::zeros(k, policy.obs_dim()),
        c: Matrix::zeros(policy.act_dim(), k),
    };
    // lambda = dl/dx̂_t, accumulated backwards through x̂_{t+1} = A x̂_t + B y_{t+1}.
    let mut lambda = Vector::zeros(k);
    for t in (0..traj.len()).rev() {
        let state = &states[t + 1];
        let err = &policy.c * state - &traj.actions[t];
        loss += err.norm_squared();
        let e = 2.0 * err;
        grad.c += &e * state.transpose();
        lambda = policy.c.transpose() * &e + policy.a.transpose() * &lambda;
        grad.a += &lambda * states[t].transpose();
        grad.b += &lambda * traj.observations[t].transpose();
    }
    Ok((loss, grad))
}

/// Output of [`train_dynamic_policy`].
#[derive(Clone, Debug)]
pub struct DynamicTrainOutput {
    pub policy: LinearPolicy,
    /// Loss of the sampled trajectory before each step.
    pub losses: Vec<f64>,
}

/// Gradient descent from `A = 0` and unit Gaussian `B`, `C`, one sampled trajectory per step.
pub fn train_dynamic_policy(expert_data: &[Trajectory], cfg: &DynamicTrainConfig) -> Result<DynamicTrainOutput> {
    let first = expert_data.first().ok_or_else(|| Error::Precondition("expert data is empty".into()))?;
    if cfg.latent_dim == 0 {
        return Err(Error::Config("latent_dim must be positive".into()));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::Config(format!("lr must be finite and non-negative, got {}", cfg.lr)));
    }
    let (p, m) = (first.obs_dim(), first.act_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.latent_dim;
    let b = randn_matrix(&mut rng, k, p);
    let c = randn_matrix(&mut rng, m, k);
    let mut policy = LinearPolicy::new(Matrix::zeros(k, k), b, c)?;
    let mut losses = Vec::with_capacity(cfg.iters);
    for step in 0..cfg.iters {
        let traj = &expert_data[rng.random_range(0..expert_data.len())];
        let (loss, g) = imitation_grad(&policy, traj)?;
        losses.push(loss);
        policy.a -= cfg.lr * g.a;
        policy.b -= cfg.lr * g.b;
        policy.c -= cfg.lr * g.c;
        if !(loss.is_finite() && policy.sq_norm().is_finite()) {
            return Err(Error::NonFinite(format!("dynamic policy training diverged at step {step}")));
        }
    }
    Ok(DynamicTrainOutput { policy, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{randn_vector, spectral_radius};

    fn expert(seed: u64) -> LinearPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = randn_matrix(&mut rng, 2, 2);
        a *= 0.5 / spectral_radius(&a);
        LinearPolicy::new(a, randn_matrix(&mut rng, 2, 3), randn_matrix(&mut rng, 2, 2)).unwrap()
    }

    fn demos(pol: &LinearPolicy, count: usize, len: usize, seed: u64) -> Vec<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let ys: Vec<_> = (0..len).map(|_| randn_vector(&mut rng, pol.obs_dim())).collect();
                let us = pol.respond(&ys).unwrap();
                Trajectory::new(ys, us).unwrap()
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pol = expert(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let guess = LinearPolicy::new(
            pol.a.clone() + 0.3 * randn_matrix(&mut rng, 2, 2),
            pol.b.clone() + 0.3 * randn_matrix(&mut rng, 2, 3),
            pol.c.clone() + 0.3 * randn_matrix(&mut rng, 2, 2),
        )
        .unwrap();
        let traj = &demos(&pol, 1, 12, 3)[0];
        let (_, g) = imitation_grad(&guess, traj).unwrap();
        let h = 1e-6;
        for which in 0..3 {
            let analytic = [&g.a, &g.b, &g.c][which];
            for idx in 0..analytic.len() {
                let mut plus = guess.clone();
                let mut minus = guess.clone();
                [&mut plus.a, &mut plus.b, &mut plus.c][which][idx] += h;
                [&mut minus.a, &mut minus.b, &mut minus.c][which][idx] -= h;
                let fd = (imitation_loss(&plus, traj).unwrap() - imitation_loss(&minus, traj).unwrap()) / (2.0 * h);
                let rel = (fd - analytic[idx]).abs() / analytic[idx].abs().max(1e-3);
                assert!(rel < 1e-4, "matrix {which} entry {idx}: fd {fd} vs {}", analytic[idx]);
            }
        }
    }

    #[test]
    fn zero_lr_keeps_initialization() {
        let data = demos(&expert(4), 3, 5, 5);
        let cfg = DynamicTrainConfig { latent_dim: 2, iters: 10, lr: 0.0, seed: 9 };
        let out = train_dynamic_policy(&data, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = randn_matrix(&mut rng, 2, 3);
        let c = randn_matrix(&mut rng, 2, 2);
        assert_eq!(out.policy, LinearPolicy::new(Matrix::zeros(2, 2), b, c).unwrap());
    }

    #[test]
    fn self_imitation_drives_loss_down() {
        let pol = expert(6);
        let data = demos(&pol, 20, 20, 7);
        let cfg = DynamicTrainConfig { latent_dim: 2, iters: 10000, lr: 3e-4, seed: 1 };
        let out = train_dynamic_policy(&data, &cfg).unwrap();
        let total = |p: &LinearPolicy| data.iter().map(|t| imitation_loss(p, t).unwrap()).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = randn_matrix(&mut rng, 2, 3);
        let c = randn_matrix(&mut rng, 2, 2);
        let init = LinearPolicy::new(Matrix::zeros(2, 2), b, c).unwrap();
        let (before, after) = (total(&init), total(&out.policy));
        assert!(after < 1e-4 * before, "loss {before} -> {after}");
    }

    #[test]
    fn empty_data_rejected() {
        assert!(train_dynamic_policy(&[], &DynamicTrainConfig::default()).is_err());
    }
}
