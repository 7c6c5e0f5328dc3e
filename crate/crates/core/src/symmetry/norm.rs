use super::op::{TransformKind, TransformOp};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::nn::{Activation, Arch, NetworkParams};

/// Squared norm over every feedforward, recurrent and bias entry.
pub fn theta_norm(net: &NetworkParams) -> f64 {
    net.sq_norm()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinNormConfig {
    pub lr: f64,
    pub steps: usize,
    pub grad_tol: f64,
}

impl Default for MinNormConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            steps: 2000,
            grad_tol: 1e-8,
        }
    }
}

/// Objective and gradient of the norm after scaling hidden layer `l` by `exp(tau[l-1])`.
fn scaled_norm(net: &NetworkParams, tau: &[Vector]) -> (f64, Vec<Vector>) {
    let n_layers = net.num_layers();
    let log_scale = |l: usize, i: usize| -> f64 {
        if l == 0 || l == n_layers {
            0.0
        } else {
            tau[l - 1][i]
        }
    };
    let mut f = 0.0;
    let mut grad: Vec<Vector> = tau.iter().map(|t| Vector::zeros(t.len())).collect();
    let add = |grad: &mut Vec<Vector>, l: usize, i: usize, sign: f64, g: f64| {
        if l != 0 && l != n_layers {
            grad[l - 1][i] += sign * g;
        }
    };
    for (l, layer) in net.layers.iter().enumerate() {
        // W_ff^l maps layer l to l + 1.
        for ((i, j), &w) in layer.w_ff.iter_enumerated() {
            let s = log_scale(l + 1, i) - log_scale(l, j);
            let term = w * w * (2.0 * s).exp();
            f += term;
            add(&mut grad, l + 1, i, 1.0, 2.0 * term);
            add(&mut grad, l, j, -1.0, 2.0 * term);
        }
        for (i, &b) in layer.b.iter().enumerate() {
            let term = b * b * (2.0 * log_scale(l + 1, i)).exp();
            f += term;
            add(&mut grad, l + 1, i, 1.0, 2.0 * term);
        }
        if let Some(w_rec) = layer.w_rec.as_ref() {
            for ((i, j), &w) in w_rec.iter_enumerated() {
                let s = log_scale(l + 1, i) - log_scale(l + 1, j);
                let term = w * w * (2.0 * s).exp();
                f += term;
                add(&mut grad, l + 1, i, 1.0, 2.0 * term);
                add(&mut grad, l + 1, j, -1.0, 2.0 * term);
            }
        }
    }
    (f, grad)
}

trait IterEnumerated {
    fn iter_enumerated(&self) -> Box<dyn Iterator<Item = ((usize, usize), &f64)> + '_>;
}

impl IterEnumerated for Matrix {
    fn iter_enumerated(&self) -> Box<dyn Iterator<Item = ((usize, usize), &f64)> + '_> {
        let rows = self.nrows();
        Box::new(self.iter().enumerate().map(move |(k, v)| ((k % rows, k / rows), v)))
    }
}

/// Norm of `net` after positive diagonal rescaling with log-scales `tau` (interior layers).
pub fn scaled_theta_norm(net: &NetworkParams, tau: &[Vector]) -> f64 {
    scaled_norm(net, tau).0
}

/// Positive diagonal scaling of the hidden units that minimizes [`theta_norm`] for a ReLU RNN.
pub fn min_norm_scaling(net: &NetworkParams) -> Result<TransformOp> {
    min_norm_scaling_from(net, None, &MinNormConfig::default())
}

/// Gradient descent on the log-scales, optionally from a given start.
pub fn min_norm_scaling_from(
    net: &NetworkParams,
    start: Option<&[Vector]>,
    cfg: &MinNormConfig,
) -> Result<TransformOp> {
    if net.arch != Arch::ElmanRnn || net.activation != Activation::Relu {
        return Err(Error::Precondition(
            "norm-minimizing scaling is defined for ReLU Elman networks".into(),
        ));
    }
    net.validate()?;
    if net.layers.iter().any(|l| l.b.iter().any(|&b| b == 0.0)) {
        return Err(Error::Precondition(
            "all bias entries must be nonzero for a unique minimizer".into(),
        ));
    }
    let interior = &net.layer_dims[1..net.layer_dims.len() - 1];
    let mut tau: Vec<Vector> = match start {
        Some(s) => {
            if s.len() != interior.len() || s.iter().zip(interior).any(|(t, &d)| t.len() != d) {
                return Err(Error::Invalid("start point does not match hidden layers".into()));
            }
            s.to_vec()
        }
        None => interior.iter().map(|&d| Vector::zeros(d)).collect(),
    };
    let (mut f, mut grad) = scaled_norm(net, &tau);
    let mut lr = cfg.lr;
    let mut converged = false;
    for _ in 0..cfg.steps {
        let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }
        // Plain step; shrink only if it would increase the objective.
        loop {
            let trial: Vec<Vector> = tau.iter().zip(&grad).map(|(t, g)| t - g * lr).collect();
            let (f_new, g_new) = scaled_norm(net, &trial);
            if f_new <= f || lr < 1e-12 {
                tau = trial;
                f = f_new;
                grad = g_new;
                break;
            }
            lr *= 0.5;
        }
    }
    if !converged {
        let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if gnorm >= cfg.grad_tol {
            log::warn!("min-norm scaling stopped with gradient norm {gnorm:.3e}");
        }
    }
    let identity: Vec<Vec<usize>> = interior.iter().map(|&d| (0..d).collect()).collect();
    let diags: Vec<Vec<f64>> = tau.iter().map(|t| t.iter().map(|x| x.exp()).collect()).collect();
    let mut op = TransformOp::scaled(&net.layer_dims, &identity, &diags)?;
    op.kind = TransformKind::ScaledPerm;
    Ok(op)
}
