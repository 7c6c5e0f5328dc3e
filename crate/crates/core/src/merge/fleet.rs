use super::average::aligned_average;
use super::barrier::loss_barrier;
use crate::align::{hard_round_op, soft_grad_align_from, SinkhornConfig, SoftAlignConfig, SoftUpdate};
use crate::error::{Error, Result};
use crate::nn::{dataset_loss, NetworkParams, Trajectory};
use crate::symmetry::{apply, TransformKind, TransformOp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub epochs: usize,
    pub inner_steps: usize,
    pub tau: f64,
    pub lr: f64,
    pub participation_fraction: f64,
    pub seed: u64,
    /// Trajectories per soft-alignment step.
    pub batch_size: usize,
    pub update: SoftUpdate,
    pub sinkhorn_iters: usize,
    /// Grid points for the per-agent barrier column; 0 disables it.
    pub barrier_grid: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            inner_steps: 200,
            tau: 1.0,
            lr: 1.0,
            participation_fraction: 1.0,
            seed: 0,
            batch_size: 4,
            update: SoftUpdate::Projected,
            sinkhorn_iters: 1000,
            barrier_grid: 0,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("merge.epochs must be at least 1".into()));
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err(Error::Config("merge.participation_fraction must lie in (0, 1]".into()));
        }
        if !(self.tau > 0.0) || !(self.lr >= 0.0) {
            return Err(Error::Config("merge.tau must be positive and merge.lr nonnegative".into()));
        }
        if self.batch_size == 0 || self.sinkhorn_iters == 0 {
            return Err(Error::Config("merge.batch_size and merge.sinkhorn_iters must be positive".into()));
        }
        if self.barrier_grid == 1 {
            return Err(Error::Config("merge.barrier_grid must be 0 or at least 2".into()));
        }
        Ok(())
    }

    pub fn soft_config(&self) -> SoftAlignConfig {
        SoftAlignConfig {
            lr: self.lr,
            steps: self.inner_steps,
            sinkhorn: SinkhornConfig {
                tau: self.tau,
                iters: self.sinkhorn_iters,
                ..SinkhornConfig::default()
            },
            alpha: None,
            batch_size: self.batch_size,
            update: self.update,
            unroll_iters: 50,
        }
    }

    /// Number of agents refined per epoch.
    pub fn participants(&self, n: usize) -> usize {
        ((self.participation_fraction * n as f64).ceil() as usize).clamp(1, n)
    }
}

/// One row of the merge log: state after `epoch` epochs (0 is the initial state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetMetric {
    pub epoch: usize,
    pub agent_id: usize,
    /// Loss of the agent's aligned model on its own data.
    pub local_loss: f64,
    /// Loss of the merged model on the agent's data.
    pub merged_loss: f64,
    /// Loss barrier between the aligned agent model and the merged model (NaN if disabled).
    pub barrier: f64,
}

#[derive(Clone, Debug)]
pub struct FleetMergeOutput {
    pub merged: NetworkParams,
    pub ops: Vec<TransformOp>,
    pub log: Vec<FleetMetric>,
}

/// Seed of agent `i` in epoch `s`, independent of scheduling.
fn agent_seed(root: u64, epoch: usize, agent: usize) -> u64 {
    crate::seed::derive_seed(root, &[epoch as u64, agent as u64])
}

fn mean_loss_or_nan(net: &NetworkParams, data: &[Trajectory]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(dataset_loss(net, data)? / data.len() as f64)
}

fn log_epoch(
    epoch: usize,
    models: &[NetworkParams],
    datasets: &[Vec<Trajectory>],
    ops: &[TransformOp],
    merged: &NetworkParams,
    cfg: &MergeConfig,
) -> Result<Vec<FleetMetric>> {
    (0..models.len())
        .into_par_iter()
        .map(|i| {
            let aligned = apply(&ops[i], &models[i])?;
            let data = &datasets[i];
            let barrier = if cfg.barrier_grid >= 2 && !data.is_empty() {
                loss_barrier(&aligned, merged, data, cfg.barrier_grid)?.barrier / data.len() as f64
            } else {
                f64::NAN
            };
            let merged_loss = mean_loss_or_nan(merged, data)?;
            if merged_loss.is_infinite() {
                return Err(Error::NonFinite(format!("merged loss at epoch {epoch}")));
            }
            Ok(FleetMetric {
                epoch,
                agent_id: i,
                local_loss: mean_loss_or_nan(&aligned, data)?,
                merged_loss,
                barrier,
            })
        })
        .collect()
}

/// Fleet merging: average the hard-aligned models, refine a sampled subset of
/// agents' soft permutations on their own data, round back to hard permutations.
///
/// Agents run in parallel; each draws from its own seed so the result does not
/// depend on the schedule.
pub fn fleet_merge(
    models: &[NetworkParams],
    datasets: &[Vec<Trajectory>],
    cfg: &MergeConfig,
) -> Result<FleetMergeOutput> {
    cfg.validate()?;
    let n = models.len();
    if n < 2 {
        return Err(Error::Precondition("fleet merging needs at least two models".into()));
    }
    if datasets.len() != n {
        return Err(Error::DimensionMismatch {
            context: "datasets per model",
            expected: n.to_string(),
            got: datasets.len().to_string(),
        });
    }
    for m in &models[1..] {
        models[0].ensure_same_shape(m)?;
    }
    let dims = models[0].layer_dims.clone();
    let soft_cfg = cfg.soft_config();
    let mut hard: Vec<TransformOp> = vec![TransformOp::identity(&dims, TransformKind::HardPerm); n];
    let mut sampler = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.participants(n);

    let mut merged = aligned_average(models, &hard)?;
    let mut log = log_epoch(0, models, datasets, &hard, &merged, cfg)?;
    for epoch in 1..=cfg.epochs {
        let mut chosen = rand::seq::index::sample(&mut sampler, n, k).into_vec();
        chosen.sort_unstable();
        if let Some(&i) = chosen.iter().find(|&&i| datasets[i].is_empty()) {
            return Err(Error::Precondition(format!("agent {i} was sampled but has no local data")));
        }
        let reference = &merged;
        let updates: Vec<(usize, TransformOp)> = chosen
            .par_iter()
            .map(|&i| {
                let mut init = hard[i].clone();
                init.kind = TransformKind::SoftDs;
                let mut rng = ChaCha8Rng::seed_from_u64(agent_seed(cfg.seed, epoch, i));
                let out = soft_grad_align_from(&models[i], reference, &datasets[i], &soft_cfg, &init, &mut rng)?;
                Ok((i, hard_round_op(&out.op)?))
            })
            .collect::<Result<_>>()?;
        for (i, op) in updates {
            hard[i] = op;
        }
        merged = aligned_average(models, &hard)?;
        log.extend(log_epoch(epoch, models, datasets, &hard, &merged, cfg)?);
    }
    Ok(FleetMergeOutput {
        merged,
        ops: hard,
        log,
    })
}
