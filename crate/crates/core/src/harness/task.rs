use crate::error::{Error, Result};
use crate::linalg::{randn_vector, Vector};
use crate::lqg::{expert_dataset, optimal_policy, LtiSystem};
use crate::nn::{predict, Activation, Arch, NetworkParams, Trajectory};
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// A random recurrent teacher labels Gaussian observation sequences.
    SyntheticRegression,
    /// The LQG-optimal controller of a random system labels closed-loop rollouts.
    LqgImitation,
}

/// Generator for `components` related data pools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub components: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Hidden width of the teacher and of the learned networks.
    pub hidden_dim: usize,
    /// Latent state dimension of the LQG systems.
    pub state_dim: usize,
    pub horizon: usize,
    /// Standard deviation of Gaussian noise added to the labels.
    pub noise: f64,
    /// Distance of each component's observation mean from the origin.
    pub shift: f64,
    /// Component teachers are `(1 - spread) * base + spread * own`; 0 shares one teacher.
    pub teacher_spread: f64,
    pub trajectories_per_component: usize,
    /// Fraction of each pool kept for training; the rest is held out.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::SyntheticRegression,
            components: 3,
            obs_dim: 8,
            act_dim: 8,
            hidden_dim: 16,
            state_dim: 4,
            horizon: 20,
            noise: 0.0,
            shift: 1.0,
            teacher_spread: 0.0,
            trajectories_per_component: 100,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Train and held-out trajectories for each component.
#[derive(Clone, Debug)]
pub struct TaskPools {
    pub train: Vec<Vec<Trajectory>>,
    pub test: Vec<Vec<Trajectory>>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("task.components", self.components),
            ("task.obs_dim", self.obs_dim),
            ("task.act_dim", self.act_dim),
            ("task.hidden_dim", self.hidden_dim),
            ("task.horizon", self.horizon),
            ("task.trajectories_per_component", self.trajectories_per_component),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.kind == TaskKind::LqgImitation && self.state_dim == 0 {
            return Err(Error::Config("task.state_dim must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.shift.is_finite()) {
            return Err(Error::Config("task.noise must be nonnegative and task.shift finite".into()));
        }
        if !(0.0..=1.0).contains(&self.teacher_spread) {
            return Err(Error::Config("task.teacher_spread must lie in [0, 1]".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("task.train_fraction must lie strictly between 0 and 1".into()));
        }
        Ok(())
    }

    /// Layer widths of the networks trained on this task.
    pub fn learner_dims(&self) -> Vec<usize> {
        vec![self.obs_dim, self.hidden_dim, self.act_dim]
    }

    /// Teacher network of synthetic component `c`.
    pub fn teacher(&self, c: usize) -> Result<NetworkParams> {
        let dims = self.learner_dims();
        let base = NetworkParams::init(Arch::ElmanRnn, &dims, Activation::Tanh, derive_seed(self.seed, &[0]))?;
        if self.teacher_spread == 0.0 {
            return Ok(base);
        }
        let own = NetworkParams::init(Arch::ElmanRnn, &dims, Activation::Tanh, derive_seed(self.seed, &[0, c as u64]))?;
        NetworkParams::lerp(&base, &own, self.teacher_spread)
    }

    /// LQG system of component `c`.
    pub fn system(&self, c: usize) -> LtiSystem {
        LtiSystem::random(self.state_dim, self.act_dim, self.obs_dim, 1.05, derive_seed(self.seed, &[1, c as u64]))
    }

    /// All pools, deterministic in `seed`, each split into train and held-out parts.
    pub fn generate(&self) -> Result<TaskPools> {
        self.validate()?;
        let mut pools = Vec::with_capacity(self.components);
        match self.kind {
            TaskKind::SyntheticRegression => {
                for c in 0..self.components {
                    let teacher = self.teacher(c)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[2, c as u64]));
                    let dir = randn_vector(&mut rng, self.obs_dim);
                    let mean = dir.normalize() * self.shift;
                    let pool = (0..self.trajectories_per_component)
                        .map(|_| {
                            let obs: Vec<Vector> =
                                (0..self.horizon).map(|_| &mean + randn_vector(&mut rng, self.obs_dim)).collect();
                            let mut acts = predict(&teacher, &obs)?;
                            if self.noise > 0.0 {
                                for a in &mut acts {
                                    *a += self.noise * randn_vector(&mut rng, self.act_dim);
                                }
                            }
                            Trajectory::new(obs, acts)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pools.push(pool);
                }
            }
            TaskKind::LqgImitation => {
                for c in 0..self.components {
                    let sys = self.system(c);
                    let expert = optimal_policy(&sys)?;
                    let seed = derive_seed(self.seed, &[3, c as u64]);
                    let mut pool = expert_dataset(&sys, &expert, self.trajectories_per_component, self.horizon, seed)?;
                    if self.noise > 0.0 {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
                        for t in &mut pool {
                            for a in &mut t.actions {
                                *a += self.noise * randn_vector(&mut rng, self.act_dim);
                            }
                        }
                    }
                    pools.push(pool);
                }
            }
        }
        let mut out = TaskPools { train: Vec::new(), test: Vec::new() };
        for (c, pool) in pools.into_iter().enumerate() {
            let (train, test) = split_pool(pool, self.train_fraction, derive_seed(self.seed, &[4, c as u64]));
            out.train.push(train);
            out.test.push(test);
        }
        Ok(out)
    }
}

/// Seeded shuffle, then the first `round(fraction * len)` trajectories (at least one
/// on each side when the pool has two or more) go to training.
pub fn split_pool(mut pool: Vec<Trajectory>, fraction: f64, seed: u64) -> (Vec<Trajectory>, Vec<Trajectory>) {
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = pool.len();
    let mut cut = (fraction * n as f64).round() as usize;
    if n >= 2 {
        cut = cut.clamp(1, n - 1);
    }
    let test = pool.split_off(cut.min(n));
    (pool, test)
}
