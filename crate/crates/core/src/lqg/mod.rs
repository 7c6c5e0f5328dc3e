//! Linear-quadratic-Gaussian systems, optimal controllers and linear policy learning.

mod experiment;
mod policy;
mod riccati;
mod rollout;
mod system;
mod train;

pub(crate) use policy::is_degenerate;
pub use experiment::{logspace, LqgExperimentConfig};
pub use policy::{optimal_policy, train_static_policy, LinearPolicy};
pub use riccati::{dare_residual, kalman_residual, solve_dare, solve_kalman};
pub use rollout::{average_cost, closed_loop_metric, expert_dataset, rollout, LqgRollout};
pub use system::LtiSystem;
pub use train::{imitation_grad, imitation_loss, train_dynamic_policy, DynamicTrainConfig, DynamicTrainOutput, PolicyGrad};
