use super::network::{Arch, NetworkParams};
use crate::error::{dim_err, Error, Result};
use crate::linalg::Vector;

/// Per-layer hidden state `h^1..h^L` of a recurrent policy.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutState {
    pub hidden: Vec<Vector>,
}

impl RolloutState {
    /// All-zero state, as at the start of every trajectory.
    pub fn zeros(net: &NetworkParams) -> Self {
        Self {
            hidden: net.layer_dims[1..].iter().map(|&d| Vector::zeros(d)).collect(),
        }
    }

    fn check(&self, net: &NetworkParams) -> Result<()> {
        if self.hidden.len() != net.num_layers() {
            return Err(dim_err("rollout state layers", net.num_layers(), self.hidden.len()));
        }
        for (h, &d) in self.hidden.iter().zip(&net.layer_dims[1..]) {
            if h.len() != d {
                return Err(dim_err("rollout state", d, h.len()));
            }
        }
        Ok(())
    }
}

/// Evaluates a feedforward policy on one observation.
pub fn forward_ff(net: &NetworkParams, obs: &Vector) -> Result<Vector> {
    if net.arch != Arch::Feedforward {
        return Err(Error::ArchitectureMismatch(
            "forward_ff needs a feedforward network".into(),
        ));
    }
    if obs.len() != net.input_dim() {
        return Err(dim_err("observation", net.input_dim(), obs.len()));
    }
    let mut h = obs.clone();
    for (l, layer) in net.layers.iter().enumerate() {
        let z = &layer.w_ff * &h + &layer.b;
        h = net.layer_activation(l).apply_vec(&z);
    }
    Ok(h)
}

/// One step of an Elman network: returns the action and the next state.
pub fn forward_rnn(
    net: &NetworkParams,
    state: &RolloutState,
    obs: &Vector,
) -> Result<(Vector, RolloutState)> {
    if net.arch != Arch::ElmanRnn {
        return Err(Error::ArchitectureMismatch(
            "forward_rnn needs an Elman network".into(),
        ));
    }
    if obs.len() != net.input_dim() {
        return Err(dim_err("observation", net.input_dim(), obs.len()));
    }
    state.check(net)?;
    let mut next = Vec::with_capacity(net.num_layers());
    let mut h = obs.clone();
    for (l, layer) in net.layers.iter().enumerate() {
        let w_rec = layer.w_rec.as_ref().expect("validated Elman layer");
        let z = w_rec * &state.hidden[l] + &layer.w_ff * &h + &layer.b;
        h = net.layer_activation(l).apply_vec(&z);
        next.push(h.clone());
    }
    Ok((h, RolloutState { hidden: next }))
}

/// Runs the policy over a whole observation sequence from the zero state.
pub fn predict(net: &NetworkParams, observations: &[Vector]) -> Result<Vec<Vector>> {
    match net.arch {
        Arch::Feedforward => observations.iter().map(|o| forward_ff(net, o)).collect(),
        Arch::ElmanRnn => {
            let mut state = RolloutState::zeros(net);
            let mut out = Vec::with_capacity(observations.len());
            for o in observations {
                let (a, s) = forward_rnn(net, &state, o)?;
                out.push(a);
                state = s;
            }
            Ok(out)
        }
    }
}
