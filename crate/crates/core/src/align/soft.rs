use super::sinkhorn::{sinkhorn_project, sinkhorn_unrolled, sinkhorn_vjp, SinkhornConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{batch_grad, NetworkParams, Trajectory};
use crate::symmetry::{apply, TransformKind, TransformOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How the soft permutations are updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SoftUpdate {
    /// Gradient step on `P` itself followed by a Sinkhorn projection of `exp(P̃ / tau)`.
    #[default]
    Projected,
    /// `P = sinkhorn(X / tau)` with a gradient step on the logits `X` through unrolled sweeps.
    Unrolled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftAlignConfig {
    pub lr: f64,
    pub steps: usize,
    pub sinkhorn: SinkhornConfig,
    /// Fixed interpolation weight; `None` draws `alpha ~ U[0, 1]` every step.
    pub alpha: Option<f64>,
    /// Trajectories drawn per step.
    pub batch_size: usize,
    pub update: SoftUpdate,
    /// Sweeps used by the unrolled update.
    pub unroll_iters: usize,
}

impl Default for SoftAlignConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            steps: 200,
            sinkhorn: SinkhornConfig::default(),
            alpha: None,
            batch_size: 1,
            update: SoftUpdate::Projected,
            unroll_iters: 50,
        }
    }
}

/// Loss of `alpha * P(theta) + (1 - alpha) * ref` on a batch and its gradient
/// with respect to every `P^l` (boundary entries are returned as zeros).
///
/// `P^{-1}` is taken as the transpose, as for doubly-stochastic matrices.
pub fn soft_loss_grad(
    theta: &NetworkParams,
    reference: &NetworkParams,
    mats: &[Matrix],
    alpha: f64,
    batch: &[&Trajectory],
) -> Result<(f64, Vec<Matrix>)> {
    theta.ensure_same_shape(reference)?;
    let op = TransformOp {
        kind: TransformKind::SoftDs,
        mats: mats.to_vec(),
    };
    let moved = apply(&op, theta)?;
    let mut mixed = reference.clone();
    mixed.scale(1.0 - alpha);
    mixed.axpy(alpha, &moved);
    let (loss, g) = batch_grad(&mixed, batch)?;

    let mut grads: Vec<Matrix> = mats.iter().map(|m| Matrix::zeros(m.nrows(), m.ncols())).collect();
    for (l, (layer, gl)) in theta.layers.iter().zip(&g.layers).enumerate() {
        let p_in = &mats[l];
        let p_out = &mats[l + 1];
        let mut d_out = &gl.w_ff * p_in * layer.w_ff.transpose();
        let d_in = gl.w_ff.transpose() * p_out * &layer.w_ff;
        d_out += &gl.b * layer.b.transpose();
        if let (Some(w), Some(gw)) = (&layer.w_rec, &gl.w_rec) {
            d_out += gw * p_out * w.transpose() + gw.transpose() * p_out * w;
        }
        grads[l + 1] += d_out;
        grads[l] += d_in;
    }
    let last = grads.len() - 1;
    for (l, gm) in grads.iter_mut().enumerate() {
        if l == 0 || l == last {
            gm.fill(0.0);
        } else {
            *gm *= alpha;
        }
    }
    Ok((loss, grads))
}

#[derive(Clone, Debug)]
pub struct SoftAlignOutput {
    pub op: TransformOp,
    /// Batch loss observed at each step.
    pub losses: Vec<f64>,
}

/// Gradient-based soft permutation alignment of `theta` towards `reference`, from identity.
pub fn soft_grad_align(
    theta: &NetworkParams,
    reference: &NetworkParams,
    dataset: &[Trajectory],
    cfg: &SoftAlignConfig,
    seed: u64,
) -> Result<TransformOp> {
    let init = TransformOp::identity(&theta.layer_dims, TransformKind::SoftDs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(soft_grad_align_from(theta, reference, dataset, cfg, &init, &mut rng)?.op)
}

/// Same as [`soft_grad_align`] from an explicit starting transform and RNG.
pub fn soft_grad_align_from<R: Rng + ?Sized>(
    theta: &NetworkParams,
    reference: &NetworkParams,
    dataset: &[Trajectory],
    cfg: &SoftAlignConfig,
    init: &TransformOp,
    rng: &mut R,
) -> Result<SoftAlignOutput> {
    theta.ensure_same_shape(reference)?;
    if dataset.is_empty() {
        return Err(Error::Precondition("soft alignment needs a nonempty dataset".into()));
    }
    if init.layer_dims() != theta.layer_dims {
        return Err(Error::Invalid("initial transform does not match the network".into()));
    }
    cfg.sinkhorn.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Invalid("batch_size must be positive".into()));
    }
    let tau = cfg.sinkhorn.tau;
    let last = init.mats.len() - 1;
    let mut mats = init.mats.clone();
    // Logits for the unrolled update start where the projected update would: at P itself.
    let mut logits: Vec<Matrix> = mats.clone();
    if cfg.update == SoftUpdate::Unrolled {
        for l in 1..last {
            mats[l] = sinkhorn_unrolled(&logits[l], tau, cfg.unroll_iters)?;
        }
    }
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let alpha = cfg.alpha.unwrap_or_else(|| rng.random_range(0.0..=1.0));
        let batch: Vec<&Trajectory> = (0..cfg.batch_size)
            .map(|_| &dataset[rng.random_range(0..dataset.len())])
            .collect();
        let (loss, grads) = soft_loss_grad(theta, reference, &mats, alpha, &batch)?;
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!("soft alignment gradient at step {step}")));
        }
        losses.push(loss);
        for l in 1..last {
            match cfg.update {
                SoftUpdate::Projected => {
                    let stepped = &mats[l] - &grads[l] * cfg.lr;
                    mats[l] = sinkhorn_project(&stepped, &cfg.sinkhorn)?;
                }
                SoftUpdate::Unrolled => {
                    let dx = sinkhorn_vjp(&logits[l], tau, cfg.unroll_iters, &grads[l])?;
                    logits[l] -= dx * cfg.lr;
                    mats[l] = sinkhorn_unrolled(&logits[l], tau, cfg.unroll_iters)?;
                }
            }
        }
    }
    Ok(SoftAlignOutput {
        op: TransformOp {
            kind: TransformKind::SoftDs,
            mats,
        },
        losses,
    })
}

/// Rounds every layer of a soft transform to its nearest hard permutation.
pub fn hard_round_op(op: &TransformOp) -> Result<TransformOp> {
    let dims = op.layer_dims();
    let interior = op.mats[1..op.mats.len() - 1]
        .iter()
        .map(super::sinkhorn::hard_round)
        .collect::<Result<Vec<_>>>()?;
    TransformOp::from_perms(&dims, &interior)
}
