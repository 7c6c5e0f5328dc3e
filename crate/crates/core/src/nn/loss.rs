//! Behavior-cloning loss and its exact gradient (backprop through time).

use super::data::Trajectory;
use super::forward::predict;
use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Squared-error imitation loss summed over the trajectory, rolled from the zero state.
pub fn bc_loss(net: &NetworkParams, traj: &Trajectory) -> Result<f64> {
    traj.check_dims(net.input_dim(), net.output_dim())?;
    let preds = predict(net, &traj.observations)?;
    Ok(preds
        .iter()
        .zip(&traj.actions)
        .map(|(p, a)| (p - a).norm_squared())
        .sum())
}

/// Loss summed over all trajectories of a dataset.
pub fn dataset_loss(net: &NetworkParams, data: &[Trajectory]) -> Result<f64> {
    data.iter().map(|t| bc_loss(net, t)).sum()
}

/// Loss averaged over the trajectories of a dataset.
pub fn mean_loss(net: &NetworkParams, data: &[Trajectory]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Invalid("mean loss over an empty dataset".into()));
    }
    Ok(dataset_loss(net, data)? / data.len() as f64)
}

/// Returns `(loss, gradient)` for one trajectory.
///
/// Works for both architectures; feedforward nets simply have no recurrent path.
pub fn bc_grad(net: &NetworkParams, traj: &Trajectory) -> Result<(f64, NetworkParams)> {
    traj.check_dims(net.input_dim(), net.output_dim())?;
    let n_layers = net.num_layers();
    let horizon = traj.len();

    // Forward pass, caching pre-activations z[t][l] and activations h[t][l] (h[t][0] = o_t).
    let mut pre: Vec<Vec<Vector>> = Vec::with_capacity(horizon);
    let mut act: Vec<Vec<Vector>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut zs = Vec::with_capacity(n_layers);
        let mut hs = Vec::with_capacity(n_layers + 1);
        hs.push(traj.observations[t].clone());
        for (l, layer) in net.layers.iter().enumerate() {
            // Same summation order as the forward pass so exact fits give exact zeros.
            let z = match layer.w_rec.as_ref() {
                Some(w_rec) if t > 0 => w_rec * &act[t - 1][l + 1] + &layer.w_ff * &hs[l] + &layer.b,
                Some(w_rec) => w_rec * Vector::zeros(w_rec.ncols()) + &layer.w_ff * &hs[l] + &layer.b,
                None => &layer.w_ff * &hs[l] + &layer.b,
            };
            hs.push(net.layer_activation(l).apply_vec(&z));
            zs.push(z);
        }
        pre.push(zs);
        act.push(hs);
    }

    let mut loss = 0.0;
    let mut grad = net.zeros_like();
    // dL/dz at time t+1 for each layer, carried backwards through the recurrence.
    let mut carry: Vec<Option<Vector>> = vec![None; n_layers];

    for t in (0..horizon).rev() {
        let resid = &act[t][n_layers] - &traj.actions[t];
        loss += resid.norm_squared();
        let mut dh = resid * 2.0;
        for l in (0..n_layers).rev() {
            let layer = &net.layers[l];
            if let (Some(w_rec), Some(dz_next)) = (layer.w_rec.as_ref(), carry[l].as_ref()) {
                dh += w_rec.transpose() * dz_next;
            }
            let dz = dh.component_mul(&net.layer_activation(l).derivative_vec(&pre[t][l]));
            let g = &mut grad.layers[l];
            g.w_ff += &dz * act[t][l].transpose();
            g.b += &dz;
            if t > 0 {
                if let Some(gw) = g.w_rec.as_mut() {
                    *gw += &dz * act[t - 1][l + 1].transpose();
                }
            }
            dh = layer.w_ff.transpose() * &dz;
            carry[l] = Some(dz);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("behavior-cloning loss".into()));
    }
    Ok((loss, grad))
}

/// Sum of losses and gradients over several trajectories.
pub fn batch_grad(net: &NetworkParams, batch: &[&Trajectory]) -> Result<(f64, NetworkParams)> {
    let mut total = 0.0;
    let mut grad = net.zeros_like();
    for traj in batch {
        let (l, g) = bc_grad(net, traj)?;
        total += l;
        grad.axpy(1.0, &g);
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::{Activation, Arch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, len: usize) -> Trajectory {
        let obs = (0..len)
            .map(|_| Vector::from_fn(d_in, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let acts = (0..len)
            .map(|_| Vector::from_fn(d_out, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        Trajectory::new(obs, acts).unwrap()
    }

    fn fd_grad(net: &NetworkParams, traj: &Trajectory, h: f64) -> Vec<f64> {
        let flat = net.to_flat();
        let mut probe = net.clone();
        (0..flat.len())
            .map(|i| {
                let mut p = flat.clone();
                p[i] += h;
                probe.set_flat(&p).unwrap();
                let up = bc_loss(&probe, traj).unwrap();
                p[i] -= 2.0 * h;
                probe.set_flat(&p).unwrap();
                let down = bc_loss(&probe, traj).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn perfect_imitation_has_zero_loss() {
        let net = NetworkParams::init(Arch::ElmanRnn, &[2, 4, 2], Activation::Tanh, 3).unwrap();
        let obs: Vec<Vector> = (0..5).map(|t| Vector::from_vec(vec![t as f64, 1.0])).collect();
        let acts = predict(&net, &obs).unwrap();
        let traj = Trajectory::new(obs, acts).unwrap();
        assert_eq!(bc_loss(&net, &traj).unwrap(), 0.0);
        let (_, g) = bc_grad(&net, &traj).unwrap();
        assert_eq!(g.sq_norm(), 0.0);
    }

    #[test]
    fn single_step_squared_norm() {
        let mut net = NetworkParams::zeros(Arch::Feedforward, &[1, 2], Activation::Identity).unwrap();
        net.layers[0].b = Vector::from_vec(vec![1.0, 0.0]);
        let traj = Trajectory::new(vec![Vector::zeros(1)], vec![Vector::zeros(2)]).unwrap();
        assert_eq!(bc_loss(&net, &traj).unwrap(), 1.0);
    }

    #[test]
    fn loss_matches_stepwise_oracle() {
        use crate::nn::forward::{forward_rnn, RolloutState};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = NetworkParams::init(Arch::ElmanRnn, &[3, 5, 2], Activation::Tanh, 5).unwrap();
        let traj = random_traj(&mut rng, 3, 2, 7);
        let mut state = RolloutState::zeros(&net);
        let mut oracle = 0.0;
        for (o, a) in traj.observations.iter().zip(&traj.actions) {
            let (y, s) = forward_rnn(&net, &state, o).unwrap();
            state = s;
            oracle += (0..a.len()).map(|i| (y[i] - a[i]).powi(2)).sum::<f64>();
        }
        assert!((bc_loss(&net, &traj).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn closed_form_single_step_identity_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = NetworkParams::init(Arch::Feedforward, &[3, 2], Activation::Identity, 8).unwrap();
        let traj = random_traj(&mut rng, 3, 2, 1);
        let (o, a) = (&traj.observations[0], &traj.actions[0]);
        let w = &net.layers[0].w_ff;
        let expected: Matrix = (w * o + &net.layers[0].b - a) * 2.0 * o.transpose();
        let (_, g) = bc_grad(&net, &traj).unwrap();
        assert!((&g.layers[0].w_ff - expected).amax() < 1e-12);
    }

    #[test]
    fn dead_relu_path_has_zero_gradient() {
        let mut net = NetworkParams::init(Arch::Feedforward, &[2, 3, 1], Activation::Relu, 2).unwrap();
        // Hidden unit 0 never activates.
        net.layers[0].w_ff.row_mut(0).fill(0.0);
        net.layers[0].b[0] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj = random_traj(&mut rng, 2, 1, 4);
        let (_, g) = bc_grad(&net, &traj).unwrap();
        assert_eq!(g.layers[1].w_ff[(0, 0)], 0.0);
        assert!(g.layers[0].w_ff.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (i, act) in [Activation::Tanh, Activation::Identity].into_iter().enumerate() {
            let net = NetworkParams::init(Arch::ElmanRnn, &[3, 4, 2], act, i as u64).unwrap();
            let traj = random_traj(&mut rng, 3, 2, 5);
            let (_, g) = bc_grad(&net, &traj).unwrap();
            let fd = fd_grad(&net, &traj, 1e-5);
            for (a, b) in g.to_flat().iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-4, "{act:?}: {a} vs {b}");
            }
        }
    }
}
