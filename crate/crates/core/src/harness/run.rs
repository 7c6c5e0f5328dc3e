use super::config::{ExperimentConfig, InitScheme, MergeMethod, ProtocolKind};
use super::partition::{dirichlet_partition, Partition};
use super::task::TaskPools;
use crate::error::{Error, Result};
use crate::merge::{fleet_merge, merge_many, naive_average, FleetMetric, MergeConfig};
use crate::nn::{mean_loss, sgd_train_logged, Activation, Arch, NetworkParams, TrainConfig, Trajectory};
use crate::seed::derive_seed;
use crate::symmetry::{apply, random_perm_op};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

const INIT: u64 = 10;
const TRAIN: u64 = 11;
const PARTITION: u64 = 12;
const PLANT: u64 = 13;
const MERGE: u64 = 14;
const PARTICIPANTS: u64 = 15;

/// Held-out loss of the merged model on one component after one merge round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub round: usize,
    pub method: MergeMethod,
    pub alpha: f64,
    pub task: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: MergeMethod,
    pub protocol: ProtocolKind,
    pub alpha: f64,
    pub seed: u64,
    pub rounds: usize,
    pub final_task_losses: Vec<f64>,
    pub final_mean_loss: f64,
    pub mixture_weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub merged: NetworkParams,
    /// Local models as they stood before the final merge.
    pub agents: Vec<NetworkParams>,
    pub partition: Partition,
    pub fleet_log: Vec<FleetMetric>,
    pub summary: ExperimentSummary,
}

/// Data and starting weights shared by every protocol.
pub struct Prepared {
    pub pools: TaskPools,
    pub partition: Partition,
    pub inits: Vec<NetworkParams>,
}

/// Training seed of agent `agent` in round `round`.
pub fn train_seed(cfg: &ExperimentConfig, agent: usize, round: usize) -> u64 {
    derive_seed(cfg.train.seed, &[cfg.seed, TRAIN, agent as u64, round as u64])
}

/// Secret permutation of agent `agent` under [`InitScheme::Planted`].
pub fn planted_op(cfg: &ExperimentConfig, agent: usize) -> crate::symmetry::TransformOp {
    random_perm_op(&cfg.task.learner_dims(), derive_seed(cfg.seed, &[PLANT, agent as u64]))
}

fn init_net(cfg: &ExperimentConfig, agent: usize) -> Result<NetworkParams> {
    NetworkParams::init(Arch::ElmanRnn, &cfg.task.learner_dims(), Activation::Tanh, derive_seed(cfg.seed, &[INIT, agent as u64]))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let pools = cfg.task.generate()?;
    let partition = dirichlet_partition(&cfg.heterogeneity, &pools.train, derive_seed(cfg.seed, &[PARTITION]))?;
    let n = cfg.heterogeneity.agents;
    let inits = match cfg.protocol.init {
        InitScheme::Independent => (0..n).map(|i| init_net(cfg, i)).collect::<Result<Vec<_>>>()?,
        InitScheme::Shared => vec![init_net(cfg, 0)?; n],
        InitScheme::Planted => {
            let base = init_net(cfg, 0)?;
            if cfg.protocol.kind == ProtocolKind::OneShot {
                vec![base; n]
            } else {
                (0..n).map(|i| if i == 0 { Ok(base.clone()) } else { apply(&planted_op(cfg, i), &base) }).collect::<Result<_>>()?
            }
        }
    };
    Ok(Prepared { pools, partition, inits })
}

/// Mean per-trajectory loss on each component's held-out pool.
pub fn evaluate(net: &NetworkParams, test_pools: &[Vec<Trajectory>]) -> Result<Vec<f64>> {
    test_pools.iter().map(|pool| mean_loss(net, pool)).collect()
}

fn train_agents(cfg: &ExperimentConfig, models: &[NetworkParams], datasets: &[Vec<Trajectory>], epochs: usize, round: usize) -> Result<Vec<NetworkParams>> {
    models
        .par_iter()
        .zip(datasets.par_iter())
        .enumerate()
        .map(|(i, (m, data))| {
            if data.is_empty() || epochs == 0 {
                return Ok(m.clone());
            }
            let tc = TrainConfig { epochs, seed: train_seed(cfg, i, round), ..cfg.train };
            Ok(sgd_train_logged(m, data, &tc)?.0)
        })
        .collect()
}

/// Merges `models` (with their local datasets) by the configured method.
pub fn merge_models(
    cfg: &ExperimentConfig,
    models: &[NetworkParams],
    datasets: &[Vec<Trajectory>],
    round: usize,
) -> Result<(NetworkParams, Vec<FleetMetric>)> {
    let seed = derive_seed(cfg.merge.seed, &[cfg.seed, MERGE, round as u64]);
    match cfg.method {
        MergeMethod::SingleDataset => Ok((models[0].clone(), Vec::new())),
        MergeMethod::NaiveAverage => Ok((naive_average(models)?, Vec::new())),
        MergeMethod::WeightMatch => Ok((merge_many(models, cfg.protocol.weight_match_rounds, seed)?.merged, Vec::new())),
        MergeMethod::FleetMerge => {
            if models.len() < 2 {
                return Ok((models[0].clone(), Vec::new()));
            }
            let mc = MergeConfig { seed, ..cfg.merge };
            let out = fleet_merge(models, datasets, &mc)?;
            Ok((out.merged, out.log))
        }
    }
}

fn rows_for(round: usize, cfg: &ExperimentConfig, losses: &[f64]) -> Vec<ResultRow> {
    losses
        .iter()
        .enumerate()
        .map(|(task, &loss)| ResultRow { round, method: cfg.method, alpha: cfg.heterogeneity.alpha, task, loss })
        .collect()
}

fn finish(cfg: &ExperimentConfig, prep: Prepared, rows: Vec<ResultRow>, merged: NetworkParams, agents: Vec<NetworkParams>, fleet_log: Vec<FleetMetric>) -> Result<ExperimentResult> {
    let rounds = rows.last().map_or(0, |r| r.round);
    let final_task_losses: Vec<f64> = rows.iter().filter(|r| r.round == rounds).map(|r| r.loss).collect();
    if final_task_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("merged model loss".into()));
    }
    let final_mean_loss = final_task_losses.iter().sum::<f64>() / final_task_losses.len() as f64;
    let summary = ExperimentSummary {
        method: cfg.method,
        protocol: cfg.protocol.kind,
        alpha: cfg.heterogeneity.alpha,
        seed: cfg.seed,
        rounds,
        final_task_losses,
        final_mean_loss,
        mixture_weights: prep.partition.weights.clone(),
    };
    Ok(ExperimentResult { rows, merged, agents, partition: prep.partition, fleet_log, summary })
}

/// Trains every agent on its partition for `train.epochs`, merges once, evaluates on
/// each component's held-out data.
pub fn run_one_shot(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let prep = prepare(cfg)?;
    let mut agents = train_agents(cfg, &prep.inits, &prep.partition.datasets, cfg.train.epochs, 0)?;
    if cfg.protocol.init == InitScheme::Planted {
        for (i, a) in agents.iter_mut().enumerate().skip(1) {
            *a = apply(&planted_op(cfg, i), a)?;
        }
    }
    let (merged, log) = merge_models(cfg, &agents, &prep.partition.datasets, 0)?;
    let rows = rows_for(0, cfg, &evaluate(&merged, &prep.pools.test)?);
    finish(cfg, prep, rows, merged, agents, log)
}

/// Sorted indices of the agents entering merge `round`.
pub fn participants(cfg: &ExperimentConfig, round: usize) -> Vec<usize> {
    let n = cfg.heterogeneity.agents;
    let k = ((cfg.protocol.participation_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[PARTICIPANTS, round as u64]));
    let mut chosen = rand::seq::index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Local training in chunks of `merge_every` epochs (out of `train.epochs`), each
/// followed by a merge of the sampled participants that every agent restarts from.
/// With `merge_every = 0` the agents train independently and merge once at the end.
pub fn run_iterative(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let prep = prepare(cfg)?;
    let total = cfg.train.epochs;
    let chunk = if cfg.protocol.merge_every == 0 { total.max(1) } else { cfg.protocol.merge_every };
    let mut agents = prep.inits.clone();
    let mut rows = Vec::new();
    let mut log = Vec::new();
    let mut done = 0;
    let mut round = 0;
    loop {
        let epochs = chunk.min(total - done);
        round += 1;
        agents = train_agents(cfg, &agents, &prep.partition.datasets, epochs, round)?;
        done += epochs;
        let chosen = participants(cfg, round);
        let models: Vec<_> = chosen.iter().map(|&i| agents[i].clone()).collect();
        let datasets: Vec<_> = chosen.iter().map(|&i| prep.partition.datasets[i].clone()).collect();
        let (merged, round_log) = merge_models(cfg, &models, &datasets, round)?;
        log.extend(round_log);
        rows.extend(rows_for(round, cfg, &evaluate(&merged, &prep.pools.test)?));
        if done >= total {
            return finish(cfg, prep, rows, merged, agents, log);
        }
        if cfg.method != MergeMethod::SingleDataset {
            agents = vec![merged; agents.len()];
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.protocol.kind {
        ProtocolKind::OneShot => run_one_shot(cfg),
        ProtocolKind::Iterative => run_iterative(cfg),
    }
}

/// Columns `round,method,alpha,task,loss`.
pub fn write_results_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `epoch,agent_id,local_loss,merged_loss,barrier`.
pub fn write_fleet_log_csv<W: std::io::Write>(log: &[FleetMetric], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `results.csv`, `summary.json` and, when present, `fleet_log.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(&result.rows, std::fs::File::create(dir.join("results.csv"))?)?;
    if !result.fleet_log.is_empty() {
        write_fleet_log_csv(&result.fleet_log, std::fs::File::create(dir.join("fleet_log.csv"))?)?;
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result.summary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TaskSpec;
    use crate::nn::sgd_train;

    fn small(method: MergeMethod) -> ExperimentConfig {
        let mut cfg = ExperimentConfig { method, ..Default::default() };
        cfg.task = TaskSpec { obs_dim: 3, act_dim: 2, hidden_dim: 4, horizon: 5, trajectories_per_component: 10, ..Default::default() };
        cfg.heterogeneity.agents = 3;
        cfg.heterogeneity.samples_per_agent = 6;
        cfg.train = TrainConfig { epochs: 4, lr: 0.05, batch_size: 3, seed: 0 };
        cfg.merge.epochs = 1;
        cfg.merge.inner_steps = 5;
        cfg
    }

    #[test]
    fn single_dataset_reports_agent_zero() {
        let cfg = small(MergeMethod::SingleDataset);
        let res = run_one_shot(&cfg).unwrap();
        assert_eq!(res.merged, res.agents[0]);
        assert_eq!(res.rows.len(), 3);
    }

    #[test]
    fn identical_agents_average_to_themselves() {
        let mut cfg = small(MergeMethod::NaiveAverage);
        cfg.protocol.init = InitScheme::Shared;
        cfg.heterogeneity.agents = 1;
        let one = run_one_shot(&cfg).unwrap();
        assert_eq!(one.merged, one.agents[0]);
    }

    #[test]
    fn never_merging_is_independent_training() {
        let mut cfg = small(MergeMethod::NaiveAverage);
        cfg.protocol.kind = ProtocolKind::Iterative;
        cfg.protocol.merge_every = 0;
        let res = run_iterative(&cfg).unwrap();
        let prep = prepare(&cfg).unwrap();
        for i in 0..3 {
            let solo = sgd_train(&prep.inits[i], &prep.partition.datasets[i], 4, 0.05, 3, train_seed(&cfg, i, 1)).unwrap();
            assert_eq!(res.agents[i], solo);
        }
        assert_eq!(res.summary.rounds, 1);
    }

    #[test]
    fn naive_iterative_matches_fedavg_reference() {
        let mut cfg = small(MergeMethod::NaiveAverage);
        cfg.protocol.kind = ProtocolKind::Iterative;
        cfg.protocol.init = InitScheme::Shared;
        cfg.protocol.merge_every = 2;
        let res = run_iterative(&cfg).unwrap();
        // Straight-line reference: local epochs, plain mean, broadcast.
        let prep = prepare(&cfg).unwrap();
        let mut global = prep.inits[0].clone();
        for round in 1..=2 {
            let locals: Vec<_> = (0..3)
                .map(|i| sgd_train(&global, &prep.partition.datasets[i], 2, 0.05, 3, train_seed(&cfg, i, round)).unwrap())
                .collect();
            global = naive_average(&locals).unwrap();
        }
        assert_eq!(res.merged, global);
        assert_eq!(res.summary.rounds, 2);
    }

    #[test]
    fn identical_data_full_batch_matches_centralized_descent() {
        let mut cfg = small(MergeMethod::NaiveAverage);
        cfg.protocol.kind = ProtocolKind::Iterative;
        cfg.protocol.init = InitScheme::Shared;
        cfg.protocol.merge_every = 1;
        cfg.train = TrainConfig { epochs: 3, lr: 0.01, batch_size: 1000, seed: 0 };
        let prep = prepare(&cfg).unwrap();
        let mut partition = prep.partition.clone();
        for d in partition.datasets.iter_mut() {
            *d = prep.partition.datasets[0].clone();
        }
        // One full-batch step per agent per round on identical data.
        let central = sgd_train(&prep.inits[0], &partition.datasets[0], 3, 0.01, 1000, 0).unwrap();
        let mut global = prep.inits[0].clone();
        for round in 1..=3 {
            let locals: Vec<_> = (0..3)
                .map(|i| sgd_train(&global, &partition.datasets[i], 1, 0.01, 1000, train_seed(&cfg, i, round)).unwrap())
                .collect();
            global = naive_average(&locals).unwrap();
        }
        assert!(global.max_abs_diff(&central) < 1e-12);
    }

    #[test]
    fn participation_sampling() {
        let mut cfg = small(MergeMethod::NaiveAverage);
        cfg.protocol.participation_fraction = 0.5;
        let p = participants(&cfg, 1);
        assert_eq!(p.len(), 2);
        assert_eq!(p, participants(&cfg, 1));
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let mut cfg = small(MergeMethod::FleetMerge);
        cfg.protocol.kind = ProtocolKind::Iterative;
        cfg.protocol.merge_every = 2;
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_results_csv(&run_experiment(&cfg).unwrap().rows, &mut a).unwrap();
        write_results_csv(&run_experiment(&cfg).unwrap().rows, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("round,method,alpha,task,loss\n1,fleet_merge,"), "{text}");
    }

    #[test]
    fn fleet_log_is_written() {
        let cfg = small(MergeMethod::FleetMerge);
        let res = run_one_shot(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&res, dir.path()).unwrap();
        let log = std::fs::read_to_string(dir.path().join("fleet_log.csv")).unwrap();
        assert!(log.starts_with("epoch,agent_id,local_loss,merged_loss,barrier\n"));
        let summary: ExperimentSummary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary.final_task_losses.len(), 3);
    }
}
