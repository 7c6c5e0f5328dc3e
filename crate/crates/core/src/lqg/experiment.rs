use super::system::LtiSystem;
use super::train::DynamicTrainConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::derive_seed;
use serde::{Deserialize, Serialize};

/// Random-system LQG imitation setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqgExperimentConfig {
    pub state_dim: usize,
    pub act_dim: usize,
    pub obs_dim: usize,
    /// State cost is `q_scale * I`; input cost is `I`.
    pub q_scale: f64,
    /// Spectral radius of the open-loop dynamics.
    pub spectral_radius: f64,
    pub horizon: usize,
    /// Expert trajectories per system.
    pub trajectories: usize,
    pub trials: usize,
    pub seed: u64,
    pub dynamic: DynamicTrainConfig,
}

impl Default for LqgExperimentConfig {
    fn default() -> Self {
        Self {
            state_dim: 4,
            act_dim: 2,
            obs_dim: 50,
            q_scale: 1.0,
            spectral_radius: 1.05,
            horizon: 100,
            trajectories: 20,
            trials: 10,
            seed: 0,
            dynamic: DynamicTrainConfig::default(),
        }
    }
}

impl LqgExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.act_dim == 0 || self.obs_dim == 0 || self.horizon == 0 {
            return Err(Error::Config("state_dim, act_dim, obs_dim and horizon must be at least 1".into()));
        }
        if !(self.q_scale >= 0.0 && self.q_scale.is_finite()) {
            return Err(Error::Config(format!("q_scale must be nonnegative, got {}", self.q_scale)));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return Err(Error::Config("spectral_radius must be positive".into()));
        }
        Ok(())
    }

    /// System of trial `trial`.
    pub fn system(&self, trial: usize) -> Result<LtiSystem> {
        self.validate()?;
        let mut sys = LtiSystem::random(
            self.state_dim,
            self.act_dim,
            self.obs_dim,
            self.spectral_radius,
            derive_seed(self.seed, &[trial as u64]),
        );
        sys.q = Matrix::identity(self.state_dim, self.state_dim) * self.q_scale;
        sys.validate()?;
        Ok(sys)
    }
}

/// `count` points evenly spaced in log10 between `10^lo` and `10^hi`, both included.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)).collect(),
    }
}
