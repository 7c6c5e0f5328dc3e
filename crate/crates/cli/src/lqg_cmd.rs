use crate::output::{print_summary, write_csv};
use crate::{require_out, Common};
use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use fleetmerge::linmerge::{grad_invertible_merge, perm_alternate_merge, InvertibleMergeConfig};
use fleetmerge::lqg::{
    average_cost, closed_loop_metric, expert_dataset, optimal_policy, rollout, train_dynamic_policy,
    train_static_policy, LinearPolicy, LqgExperimentConfig, LtiSystem,
};
use fleetmerge::merge::Interpolate;
use fleetmerge::nn::{load_dataset, save_dataset, Trajectory};
use fleetmerge::seed::derive_seed;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Subcommand, Debug)]
pub enum LqgCommand {
    /// Sample a random system, its optimal controller and expert trajectories
    Expert(ExpertArgs),
    /// Fit a policy to expert trajectories
    Train(TrainArgs),
    /// Merge linear policies up to a change of latent coordinates
    Merge(MergeArgs),
    /// Closed-loop cost of a policy, optionally against an expert
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct ExpertArgs {
    #[command(flatten)]
    common: Common,
    /// Trial index; each trial draws a different system
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolicyKind {
    /// Latent-state policy trained by backpropagation through time
    Dynamic,
    /// Memoryless gain `u = K y` fitted by least squares
    Static,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Expert dataset files
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "dynamic")]
    kind: PolicyKind,
    /// Per-iteration loss CSV (dynamic only)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LinearMergeMethod {
    /// Alternate permutation matching and averaging
    Perm,
    /// Gradient descent over invertible latent transforms
    Invertible,
    /// Entrywise mean without alignment
    Average,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "invertible")]
    method: LinearMergeMethod,
    /// Policy files to merge
    #[arg(required = true, num_args = 2..)]
    policies: Vec<PathBuf>,
    /// Alternation rounds (perm)
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    /// Gradient step size (invertible)
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Gradient steps (invertible)
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    /// Per-round objective CSV
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// Expert to compare closed-loop observations against
    #[arg(long)]
    expert: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    rollouts: usize,
}

pub fn run(cmd: LqgCommand) -> Result<()> {
    match cmd {
        LqgCommand::Expert(a) => expert(a),
        LqgCommand::Train(a) => train(a),
        LqgCommand::Merge(a) => merge(a),
        LqgCommand::Eval(a) => eval(a),
    }
}

fn lqg_config(common: &Common) -> Result<LqgExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<LqgExperimentConfig>(&text).context("invalid LQG config")?
        }
        None => LqgExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_policy(path: &Path) -> Result<LinearPolicy> {
    LinearPolicy::load(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct CostRow {
    rollout: usize,
    cost: f64,
}

fn expert(args: ExpertArgs) -> Result<()> {
    let cfg = lqg_config(&args.common)?;
    let dir = require_out(&args.common)?;
    std::fs::create_dir_all(dir)?;
    let sys = cfg.system(args.trial)?;
    let policy = optimal_policy(&sys)?;
    let seed = derive_seed(cfg.seed, &[args.trial as u64, 1]);
    let data = expert_dataset(&sys, &policy, cfg.trajectories, cfg.horizon, seed)?;
    sys.save(&dir.join("system.json"))?;
    policy.save(&dir.join("expert.json"))?;
    save_dataset(&dir.join("data.json"), &data)?;
    let rows = (0..cfg.trajectories)
        .map(|i| Ok(CostRow { rollout: i, cost: rollout(&sys, &policy, cfg.horizon, seed.wrapping_add(i as u64))?.average_cost() }))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&dir.join("costs.csv"), &rows)?;
    let mean = rows.iter().map(|r| r.cost).sum::<f64>() / rows.len().max(1) as f64;
    print_summary(&serde_json::json!({
        "trial": args.trial,
        "state_dim": sys.n(),
        "act_dim": sys.m(),
        "obs_dim": sys.p(),
        "trajectories": data.len(),
        "expert_cost": mean,
        "out": dir,
    }))
}

#[derive(Serialize)]
struct IterRow {
    iter: usize,
    loss: f64,
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = lqg_config(&args.common)?;
    let out = require_out(&args.common)?;
    let mut data: Vec<Trajectory> = Vec::new();
    for p in &args.data {
        data.extend(load_dataset(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let (policy, final_loss) = match args.kind {
        PolicyKind::Dynamic => {
            let tc = fleetmerge::lqg::DynamicTrainConfig { seed: derive_seed(cfg.dynamic.seed, &[cfg.seed]), ..cfg.dynamic };
            let trained = train_dynamic_policy(&data, &tc)?;
            if let Some(log) = &args.log {
                let rows: Vec<_> = trained.losses.iter().enumerate().map(|(iter, &loss)| IterRow { iter, loss }).collect();
                write_csv(log, &rows)?;
            }
            let last = trained.losses.last().copied();
            (trained.policy, last)
        }
        PolicyKind::Static => {
            if args.log.is_some() {
                bail!("--log only applies to dynamic training");
            }
            let pairs: Vec<_> = data
                .iter()
                .flat_map(|t| t.observations.iter().cloned().zip(t.actions.iter().cloned()))
                .collect();
            (LinearPolicy::from_static(&train_static_policy(&pairs)?), None)
        }
    };
    policy.save(out)?;
    print_summary(&serde_json::json!({
        "kind": format!("{:?}", args.kind).to_lowercase(),
        "trajectories": data.len(),
        "latent_dim": policy.latent_dim(),
        "final_loss": final_loss,
        "out": out,
    }))
}

fn merge(args: MergeArgs) -> Result<()> {
    let _cfg = lqg_config(&args.common)?;
    let out = require_out(&args.common)?;
    let policies = args.policies.iter().map(|p| load_policy(p)).collect::<Result<Vec<_>>>()?;
    let (merged, objective) = match args.method {
        LinearMergeMethod::Average => {
            let w = 1.0 / policies.len() as f64;
            let mut acc = LinearPolicy::combine(&policies[0], w, &policies[1], w)?;
            for p in &policies[2..] {
                acc = LinearPolicy::combine(&acc, 1.0, p, w)?;
            }
            if args.log.is_some() {
                bail!("--log needs an aligning method (perm or invertible)");
            }
            (acc, None)
        }
        method => {
            let state = match method {
                LinearMergeMethod::Perm => perm_alternate_merge(&policies, args.rounds)?,
                _ => grad_invertible_merge(&policies, &InvertibleMergeConfig { lr: args.lr, steps: args.steps, ..Default::default() })?,
            };
            if let Some(log) = &args.log {
                state.write_csv(std::fs::File::create(log)?)?;
            }
            let obj = state.objective();
            (state.theta_bar, Some(obj))
        }
    };
    merged.save(out)?;
    print_summary(&serde_json::json!({
        "method": format!("{:?}", args.method).to_lowercase(),
        "policies": policies.len(),
        "objective": objective,
        "out": out,
    }))
}

#[derive(Serialize)]
struct EvalRow {
    metric: &'static str,
    value: f64,
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = lqg_config(&args.common)?;
    let sys = LtiSystem::load(&args.system).with_context(|| format!("reading {}", args.system.display()))?;
    let policy = load_policy(&args.policy)?;
    let seed = derive_seed(cfg.seed, &[2]);
    let mut rows = vec![
        EvalRow { metric: "cost", value: average_cost(&sys, &policy, cfg.horizon, args.rollouts, seed)? },
        EvalRow { metric: "stabilizing", value: f64::from(u8::from(policy.is_stabilizing(&sys)?)) },
    ];
    if let Some(path) = &args.expert {
        let expert = load_policy(path)?;
        rows.push(EvalRow { metric: "expert_cost", value: average_cost(&sys, &expert, cfg.horizon, args.rollouts, seed)? });
        rows.push(EvalRow {
            metric: "closed_loop_gap",
            value: closed_loop_metric(&sys, &policy, &expert, cfg.horizon, args.rollouts, seed)?,
        });
    }
    if let Some(out) = &args.common.out {
        write_csv(out, &rows)?;
    }
    let summary: serde_json::Map<String, serde_json::Value> =
        rows.iter().map(|r| (r.metric.to_string(), serde_json::json!(r.value))).collect();
    print_summary(&summary)
}
