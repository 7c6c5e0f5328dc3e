use crate::output::{print_summary, write_csv};
use crate::{experiment_config, require_out, Common};
use anyhow::{bail, Context, Result};
use clap::Args;
use fleetmerge::align::weight_match_align;
use fleetmerge::harness::{merge_models, prepare, run_experiment, write_fleet_log_csv, write_outputs, MergeMethod};
use fleetmerge::nn::{load_dataset, save_dataset, sgd_train_logged, Activation, Arch, NetworkParams, Trajectory};
use fleetmerge::seed::derive_seed;
use fleetmerge::symmetry::{self, apply, random_perm_op};
use fleetmerge::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset files (JSON trajectory lists), concatenated
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization
    #[arg(long)]
    init: Option<PathBuf>,
    /// Per-epoch training loss CSV
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[command(flatten)]
    common: Common,
    /// naive, weight_match or fleet
    #[arg(long, default_value = "naive")]
    method: String,
    /// Checkpoints to merge
    #[arg(required = true, num_args = 2..)]
    models: Vec<PathBuf>,
    /// One dataset file per checkpoint, in the same order (required by fleet)
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Per-agent merge log CSV (fleet only)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BarrierArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Dataset the loss is summed over
    #[arg(long)]
    data: PathBuf,
    /// Number of interpolation points, endpoints included
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Permute `b` onto `a` by weight matching first
    #[arg(long)]
    align: bool,
}

#[derive(Args, Debug)]
pub struct FedsimArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct CheckInvarianceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Number of random permutations
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Probe sequence length
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Probe sequences per permutation
    #[arg(long, default_value_t = 4)]
    probes: usize,
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_dataset(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(out)
}

fn load_model(path: &Path) -> Result<NetworkParams> {
    NetworkParams::load(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct PartitionRow {
    agent: usize,
    component: usize,
    weight: f64,
    trajectories: usize,
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = experiment_config(&args.common)?;
    let dir = require_out(&args.common)?;
    std::fs::create_dir_all(dir)?;
    let prep = prepare(&cfg)?;
    let part = &prep.partition;
    for (i, data) in part.datasets.iter().enumerate() {
        save_dataset(&dir.join(format!("agent_{i}.json")), data)?;
    }
    for (c, pool) in prep.pools.test.iter().enumerate() {
        save_dataset(&dir.join(format!("test_{c}.json")), pool)?;
    }
    let mut rows = Vec::new();
    for (agent, w) in part.weights.iter().enumerate() {
        for (component, &weight) in w.iter().enumerate() {
            let trajectories = part.components[agent].iter().filter(|&&c| c == component).count();
            rows.push(PartitionRow { agent, component, weight, trajectories });
        }
    }
    write_csv(&dir.join("partition.csv"), &rows)?;
    print_summary(&serde_json::json!({
        "agents": part.datasets.len(),
        "components": prep.pools.test.len(),
        "alpha": cfg.heterogeneity.alpha,
        "seed": cfg.seed,
        "out": dir,
    }))
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = experiment_config(&args.common)?;
    let out = require_out(&args.common)?;
    let data = load_all(&args.data)?;
    let first = data.first().context("no trajectories in the given datasets")?;
    let net = match &args.init {
        Some(p) => load_model(p)?,
        None => {
            let dims = [first.obs_dim(), cfg.task.hidden_dim, first.act_dim()];
            NetworkParams::init(Arch::ElmanRnn, &dims, Activation::Tanh, derive_seed(cfg.seed, &[0]))?
        }
    };
    let tc = fleetmerge::nn::TrainConfig { seed: derive_seed(cfg.train.seed, &[cfg.seed]), ..cfg.train };
    let (trained, losses) = sgd_train_logged(&net, &data, &tc)?;
    trained.save(out)?;
    if let Some(log) = &args.log {
        let rows: Vec<_> = losses.iter().enumerate().map(|(epoch, &loss)| EpochRow { epoch, loss }).collect();
        write_csv(log, &rows)?;
    }
    print_summary(&serde_json::json!({
        "trajectories": data.len(),
        "epochs": tc.epochs,
        "final_loss": losses.last(),
        "out": out,
    }))
}

pub fn merge(args: MergeArgs) -> Result<()> {
    let mut cfg = experiment_config(&args.common)?;
    let out = require_out(&args.common)?;
    cfg.method = args.method.parse()?;
    if cfg.method == MergeMethod::SingleDataset {
        bail!("merge needs a real merge method (naive, weight_match or fleet)");
    }
    let models = args.models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    let datasets = if cfg.method == MergeMethod::FleetMerge {
        if args.data.len() != models.len() {
            bail!("fleet merging needs one --data file per checkpoint ({} given for {} checkpoints)", args.data.len(), models.len());
        }
        args.data.iter().map(|p| load_all(std::slice::from_ref(p))).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let (merged, log) = merge_models(&cfg, &models, &datasets, 0)?;
    merged.save(out)?;
    if let Some(path) = &args.log {
        write_fleet_log_csv(&log, std::fs::File::create(path)?)?;
    }
    print_summary(&serde_json::json!({
        "method": cfg.method.name(),
        "models": models.len(),
        "out": out,
    }))
}

#[derive(Serialize)]
struct GridRow {
    lambda: f64,
    loss: f64,
}

pub fn barrier(args: BarrierArgs) -> Result<()> {
    let _cfg = experiment_config(&args.common)?;
    let a = load_model(&args.a)?;
    let mut b = load_model(&args.b)?;
    if args.align {
        let op = weight_match_align(&b, &a)?;
        b = apply(&op, &b)?;
    }
    let data = load_all(std::slice::from_ref(&args.data))?;
    let report = fleetmerge::merge::loss_barrier(&a, &b, &data, args.grid)?;
    if let Some(out) = &args.common.out {
        let rows: Vec<_> = report.lambdas.iter().zip(&report.values).map(|(&lambda, &loss)| GridRow { lambda, loss }).collect();
        write_csv(out, &rows)?;
    }
    print_summary(&serde_json::json!({
        "barrier": report.barrier,
        "aligned": args.align,
        "grid": args.grid,
    }))
}

pub fn fedsim(args: FedsimArgs) -> Result<()> {
    let cfg = experiment_config(&args.common)?;
    let dir = args
        .common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .context("an output directory is needed (--out or `output` in the config)")?;
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &dir)?;
    print_summary(&result.summary)
}

#[derive(Serialize)]
struct DeviationRow {
    trial: usize,
    deviation: f64,
}

pub fn check_invariance(args: CheckInvarianceArgs) -> Result<()> {
    let cfg = experiment_config(&args.common)?;
    let net = load_model(&args.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let mut rows = Vec::with_capacity(args.count);
    for trial in 0..args.count {
        let op = random_perm_op(&net.layer_dims, derive_seed(cfg.seed, &[0, trial as u64]));
        let probes = (0..args.probes)
            .map(|_| {
                let obs: Vec<Vector> = (0..args.horizon)
                    .map(|_| Vector::from_fn(net.input_dim(), |_, _| StandardNormal.sample(&mut rng)))
                    .collect();
                let acts = vec![Vector::zeros(net.output_dim()); obs.len()];
                Trajectory::new(obs, acts)
            })
            .collect::<fleetmerge::Result<Vec<_>>>()?;
        rows.push(DeviationRow { trial, deviation: symmetry::check_invariance(&net, &op, &probes)? });
    }
    if let Some(out) = &args.common.out {
        write_csv(out, &rows)?;
    }
    let max = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    print_summary(&serde_json::json!({
        "permutations": args.count,
        "max_deviation": max,
    }))
}
