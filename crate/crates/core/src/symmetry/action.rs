use super::op::{TransformKind, TransformOp};
use crate::error::{dim_err, Error, Result};
use crate::nn::{predict, Activation, Arch, NetworkParams, Trajectory};

fn check_dims(op: &TransformOp, net: &NetworkParams) -> Result<()> {
    let dims = op.layer_dims();
    if dims != net.layer_dims {
        return Err(dim_err(
            "transform layers",
            format!("{:?}", net.layer_dims),
            format!("{dims:?}"),
        ));
    }
    Ok(())
}

fn act(op: &TransformOp, net: &NetworkParams) -> Result<NetworkParams> {
    check_dims(op, net)?;
    let inv: Vec<_> = (0..op.mats.len())
        .map(|l| op.inverse_mat(l))
        .collect::<Result<_>>()?;
    let mut out = net.clone();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        let p_out = &op.mats[l + 1];
        layer.w_ff = p_out * &layer.w_ff * &inv[l];
        layer.b = p_out * &layer.b;
        if let Some(w_rec) = layer.w_rec.as_mut() {
            *w_rec = p_out * &*w_rec * &inv[l + 1];
        }
    }
    Ok(out)
}

/// `(W, b) ↦ (P^{l+1} W (P^l)^{-1}, P^{l+1} b)` on a feedforward net.
pub fn apply_ff(op: &TransformOp, net: &NetworkParams) -> Result<NetworkParams> {
    if net.arch != Arch::Feedforward {
        return Err(Error::ArchitectureMismatch("apply_ff needs a feedforward network".into()));
    }
    act(op, net)
}

/// Feedforward action plus `W_rec ↦ P W_rec P^{-1}` on each recurrent matrix.
pub fn apply_rnn(op: &TransformOp, net: &NetworkParams) -> Result<NetworkParams> {
    if net.arch != Arch::ElmanRnn {
        return Err(Error::ArchitectureMismatch("apply_rnn needs an Elman network".into()));
    }
    act(op, net)
}

/// Dispatches on the network's architecture.
pub fn apply(op: &TransformOp, net: &NetworkParams) -> Result<NetworkParams> {
    act(op, net)
}

/// Largest absolute output difference between `net` and `op(net)` over the probe sequences.
///
/// Only transforms under which the outputs are provably unchanged are accepted.
pub fn check_invariance(
    net: &NetworkParams,
    op: &TransformOp,
    probes: &[Trajectory],
) -> Result<f64> {
    match op.kind {
        TransformKind::HardPerm => {}
        TransformKind::ScaledPerm if net.activation == Activation::Relu => {}
        TransformKind::ScaledPerm => {
            return Err(Error::Precondition(format!(
                "scaled permutations only preserve outputs for ReLU, not {:?}",
                net.activation
            )))
        }
        kind => {
            return Err(Error::Precondition(format!(
                "{kind:?} transforms do not preserve outputs in general"
            )))
        }
    }
    check_deviation(net, op, probes)
}

/// Like [`check_invariance`] without the precondition, for negative controls.
pub fn check_deviation(net: &NetworkParams, op: &TransformOp, probes: &[Trajectory]) -> Result<f64> {
    let moved = apply(op, net)?;
    let mut worst = 0.0_f64;
    for probe in probes {
        let a = predict(net, &probe.observations)?;
        let b = predict(&moved, &probe.observations)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).amax());
        }
    }
    Ok(worst)
}

/// Convenience wrapper returning whether the deviation is within `tol`.
pub fn is_invariant(net: &NetworkParams, op: &TransformOp, probes: &[Trajectory], tol: f64) -> Result<bool> {
    Ok(check_invariance(net, op, probes)? <= tol)
}
