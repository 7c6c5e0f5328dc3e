use crate::error::{Error, Result};
use crate::nn::Trajectory;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeterogeneityConfig {
    pub agents: usize,
    /// Dirichlet concentration; small values give peaked mixtures.
    pub alpha: f64,
    pub samples_per_agent: usize,
}

impl Default for HeterogeneityConfig {
    fn default() -> Self {
        Self { agents: 5, alpha: 1.0, samples_per_agent: 40 }
    }
}

impl HeterogeneityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.samples_per_agent == 0 {
            return Err(Error::Config("heterogeneity.agents and heterogeneity.samples_per_agent must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("heterogeneity.alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Per-agent datasets with the mixture weights and component labels they were drawn from.
#[derive(Clone, Debug)]
pub struct Partition {
    pub datasets: Vec<Vec<Trajectory>>,
    pub weights: Vec<Vec<f64>>,
    pub components: Vec<Vec<usize>>,
}

/// Mixture weights on the `k`-simplex from a symmetric Dirichlet.
///
/// Normalized Gamma draws, taken in log space as `ln G(alpha + 1) + ln(U) / alpha`
/// so that tiny concentrations do not underflow to an all-zero vector.
pub fn sample_mixture<R: Rng + ?Sized>(k: usize, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Precondition("need at least one component".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("dirichlet concentration must be positive, got {alpha}")));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::Invalid(format!("gamma: {e}")))?;
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            gamma.sample(rng).ln() + u.ln() / alpha
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Shannon entropy in nats.
pub fn mixture_entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Draws each agent's mixture weights, then each of its trajectories by first picking a
/// component from those weights and then a uniform trajectory (with replacement) from it.
pub fn dirichlet_partition(cfg: &HeterogeneityConfig, pools: &[Vec<Trajectory>], seed: u64) -> Result<Partition> {
    cfg.validate()?;
    if pools.is_empty() {
        return Err(Error::Precondition("no component pools".into()));
    }
    if let Some(c) = pools.iter().position(|p| p.is_empty()) {
        return Err(Error::Precondition(format!("component pool {c} is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Partition { datasets: Vec::new(), weights: Vec::new(), components: Vec::new() };
    for _ in 0..cfg.agents {
        let w = sample_mixture(pools.len(), cfg.alpha, &mut rng)?;
        let pick = WeightedIndex::new(&w).map_err(|e| Error::Invalid(format!("mixture weights: {e}")))?;
        let mut data = Vec::with_capacity(cfg.samples_per_agent);
        let mut comps = Vec::with_capacity(cfg.samples_per_agent);
        for _ in 0..cfg.samples_per_agent {
            let c = pick.sample(&mut rng);
            data.push(pools[c][rng.random_range(0..pools[c].len())].clone());
            comps.push(c);
        }
        out.datasets.push(data);
        out.weights.push(w);
        out.components.push(comps);
    }
    Ok(out)
}
