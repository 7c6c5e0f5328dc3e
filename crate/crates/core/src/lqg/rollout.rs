use super::policy::LinearPolicy;
use super::system::LtiSystem;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{psd_sqrt, randn_vector, Vector};
use crate::nn::Trajectory;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One closed-loop episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqgRollout {
    #[serde(with = "crate::linalg::serde_vecs")]
    pub states: Vec<Vector>,
    #[serde(with = "crate::linalg::serde_vecs")]
    pub observations: Vec<Vector>,
    #[serde(with = "crate::linalg::serde_vecs")]
    pub actions: Vec<Vector>,
    pub costs: Vec<f64>,
}

impl LqgRollout {
    pub fn average_cost(&self) -> f64 {
        if self.costs.is_empty() {
            return 0.0;
        }
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    /// `(y_t, u_t)` pairs as a behavior-cloning trajectory.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.observations.clone(), self.actions.clone())
    }
}

/// Noise draws for one episode, shared between policies for paired comparisons.
struct Noise {
    x0: Vector,
    w: Vec<Vector>,
    v: Vec<Vector>,
}

fn draw_noise(sys: &LtiSystem, horizon: usize, seed: u64) -> Noise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s0, sw, sv) = (psd_sqrt(&sys.sigma_0), psd_sqrt(&sys.sigma_w), psd_sqrt(&sys.sigma_v));
    let x0 = &s0 * randn_vector(&mut rng, sys.n());
    let mut w = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        w.push(&sw * randn_vector(&mut rng, sys.n()));
        v.push(&sv * randn_vector(&mut rng, sys.p()));
    }
    Noise { x0, w, v }
}

/// Simulates `horizon` steps: `y_t = C x_t + v_t`, policy update, `x_{t+1} = A x_t + B u_t + w_t`.
pub fn rollout(sys: &LtiSystem, policy: &LinearPolicy, horizon: usize, seed: u64) -> Result<LqgRollout> {
    if policy.obs_dim() != sys.p() || policy.act_dim() != sys.m() {
        return Err(dim_err(
            "policy vs system",
            format!("p={}, m={}", sys.p(), sys.m()),
            format!("p={}, m={}", policy.obs_dim(), policy.act_dim()),
        ));
    }
    let noise = draw_noise(sys, horizon, seed);
    let mut x = noise.x0;
    let mut xhat = Vector::zeros(policy.latent_dim());
    let mut out = LqgRollout {
        states: Vec::with_capacity(horizon),
        observations: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let y = &sys.c * &x + &noise.v[t];
        xhat = &policy.a * &xhat + &policy.b * &y;
        let u = &policy.c * &xhat;
        let cost = x.dot(&(&sys.q * &x)) + u.dot(&(&sys.r * &u));
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("rollout cost at step {t}")));
        }
        let next = &sys.a * &x + &sys.b * &u + &noise.w[t];
        out.states.push(std::mem::replace(&mut x, next));
        out.observations.push(y);
        out.actions.push(u);
        out.costs.push(cost);
    }
    Ok(out)
}

/// Expert demonstrations: `count` rollouts with seeds `seed, seed + 1, ...`.
pub fn expert_dataset(sys: &LtiSystem, expert: &LinearPolicy, count: usize, horizon: usize, seed: u64) -> Result<Vec<Trajectory>> {
    (0..count as u64)
        .map(|i| rollout(sys, expert, horizon, seed.wrapping_add(i))?.to_trajectory())
        .collect()
}

/// Monte-Carlo average cost over `n_rollouts` seeded episodes.
pub fn average_cost(sys: &LtiSystem, policy: &LinearPolicy, horizon: usize, n_rollouts: usize, seed: u64) -> Result<f64> {
    if n_rollouts == 0 {
        return Err(Error::Precondition("need at least one rollout".into()));
    }
    let mut total = 0.0;
    for i in 0..n_rollouts as u64 {
        total += rollout(sys, policy, horizon, seed.wrapping_add(i))?.average_cost();
    }
    Ok(total / n_rollouts as f64)
}

/// Mean over paired-noise rollouts of `max_t ||y_t^expert - y_t^learner||^2`.
pub fn closed_loop_metric(
    sys: &LtiSystem,
    learner: &LinearPolicy,
    expert: &LinearPolicy,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    if n_rollouts == 0 {
        return Err(Error::Precondition("need at least one rollout".into()));
    }
    let mut total = 0.0;
    for i in 0..n_rollouts as u64 {
        let s = seed.wrapping_add(i);
        let (e, l) = (rollout(sys, expert, horizon, s)?, rollout(sys, learner, horizon, s)?);
        let worst = e
            .observations
            .iter()
            .zip(&l.observations)
            .map(|(a, b)| (a - b).norm_squared())
            .fold(0.0, f64::max);
        total += worst;
    }
    Ok(total / n_rollouts as f64)
}
