//! Adam, the validation-driven training loop, and grid search.

mod adam;
mod config;
mod grid;
mod history;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use config::{Protocol, TrainConfig};
pub use grid::{grid_search, rank_results, GridOutcome, GridResult, GridSpec, RunSummary, Setting};
pub use history::{StopReason, TrainHistory, ValidationRecord};
pub use train::{count_nonzero_groups, evaluate, train, TrainOutcome};
