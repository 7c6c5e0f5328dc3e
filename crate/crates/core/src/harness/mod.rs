//! Experiment driver: synthetic tasks, non-IID partitions, merge protocols and outputs.

mod config;
mod partition;
mod run;
mod task;

pub use config::{ExperimentConfig, InitScheme, MergeMethod, ProtocolConfig, ProtocolKind};
pub use partition::{dirichlet_partition, mixture_entropy, sample_mixture, HeterogeneityConfig, Partition};
pub use run::{
    evaluate, merge_models, participants, planted_op, prepare, run_experiment, run_iterative, run_one_shot, train_seed,
    write_fleet_log_csv, write_outputs, write_results_csv, ExperimentResult, ExperimentSummary, Prepared, ResultRow,
};
pub use task::{split_pool, TaskKind, TaskPools, TaskSpec};
